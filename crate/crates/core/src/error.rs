use thiserror::Error;

/// Errors raised by model construction, objective evaluation, the
/// optimizers and the numerical oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parameter lies outside the model domain")]
    OutOfDomain,

    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("envelope was computed on a different ray")]
    MismatchedRay,

    #[error("iteration {iteration} diverged (non-finite iterate or loss)")]
    Divergence { iteration: usize },

    #[error("oracle failure: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, Error>;
