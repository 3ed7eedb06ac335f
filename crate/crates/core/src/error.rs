use thiserror::Error;

/// Errors raised by the credal testing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CredalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("split ratio solve did not converge after {iters} iterations (n = {n}, beta = {beta})")]
    NoConvergence { n: usize, beta: f64, iters: usize },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CredalError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CredalError {
    CredalError::InvalidInput(msg.into())
}
