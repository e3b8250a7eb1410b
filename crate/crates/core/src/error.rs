use thiserror::Error;

/// Errors raised by the estimators, builders and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: String, found: String },

    #[error("smoothed estimate of step {requested} not yet available (latest step {latest}, lag {lag})")]
    NotYetAvailable { requested: usize, latest: usize, lag: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dim(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch { what, expected: expected.to_string(), found: found.to_string() }
    }
}
