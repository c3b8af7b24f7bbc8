use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimators, means and learners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    /// The corrected distance needs `p < n`.
    #[error("aspect ratio p/n = {p}/{n} is not below 1")]
    AspectRatioOutOfRange { p: usize, n: usize },

    #[error("retraction left the SPD cone")]
    RetractionBreakdown,

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::RetractionBreakdown)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
