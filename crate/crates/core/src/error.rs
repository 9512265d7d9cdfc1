use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the samplers, the selection machinery and the oracle.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("observed covariance block is singular even after jitter")]
    SingularObservedBlock,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("observed values have zero probability under the model")]
    ZeroEvidence,
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("class {class} has {count} members, fewer than {folds} folds")]
    FoldConstruction { class: u8, count: usize, folds: usize },
    #[error("enumeration exceeded {limit} outcomes")]
    SupportTooLarge { limit: usize },
    #[error("joint table is not strictly positive")]
    NotStrictlyPositive,
    #[error("tables have different supports")]
    SupportMismatch,
    #[error("row {row}: {source}")]
    RowFailed { row: usize, source: Box<Error> },
    #[error("no observed-coordinate sampler for mask pattern {pattern}: {source}")]
    PatternFailed { pattern: String, source: Box<Error> },
    #[error("univariate imputation requires MCAR missingness")]
    RequiresMcar,
}

pub type Result<T> = core::result::Result<T, Error>;
