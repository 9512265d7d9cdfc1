//! Model-X knockoffs for covariates with missing values.
//!
//! The crate is `no_std` (with `alloc`) and holds every sampler, the
//! knockoff filter and the exact enumeration oracle. IO, configuration and
//! the experiment driver live in the `missknock` crate.

#![no_std]

extern crate alloc;

pub mod certify;
pub mod error;
pub mod gz;
pub mod hmm;
pub mod linalg;
pub mod model;
pub mod mvn;
pub mod oracle;
pub mod pipeline;
pub mod random;
pub mod selection;

pub use error::{Error, Result};
pub use model::{
    make_ar1_covariance, make_paper_hmm, CandidateSet, HmmModel, LatentFactorModel, MaskedSample, MissingnessSpec,
    MvnModel, ResponseModel,
};
pub use pipeline::KnockoffPair;
