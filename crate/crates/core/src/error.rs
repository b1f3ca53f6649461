use thiserror::Error;

/// Errors raised by the toolkit. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model, plan or data invariant does not hold.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Not enough data for the requested statistic (e.g. fewer than two increments).
    #[error("insufficient data: {0}")]
    Insufficient(String),

    /// The variance estimate in a studentized statistic is not positive.
    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(reason: impl Into<String>) -> Self {
        Error::Domain(reason.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
