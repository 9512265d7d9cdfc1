//! Experiment driver for knockoff selection with missing covariates: JSON
//! configurations, parallel grid execution with deterministic output, CSV/JSON
//! emission and a Gaussian imputation tool for user data.

pub mod config;
pub mod experiment;
pub mod impute;
pub mod output;

pub use config::{ExperimentConfig, Preset};
pub use experiment::{run_experiment, ExperimentResult, RunOptions};
pub use output::emit_results;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] missknock_core::Error),
}
