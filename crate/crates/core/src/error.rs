use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A matrix that had to be positive definite was not.
    #[error("{context} is not positive definite (condition estimate {condition:.3e})")]
    NotPositiveDefinite { context: String, condition: f64 },

    #[error("regression operator has rank {rank}, need full column rank {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_order(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("Renyi order must be finite and > 1, got {lambda}")))
    }
}
