use thiserror::Error;

/// Errors raised by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value violates a documented precondition (domain, range, shape).
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A configuration value is unusable, or two objects that must agree
    /// (kernel, action count) do not.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A sample source ran out of fresh samples.
    #[error("data source exhausted: requested {requested} samples, {available} available")]
    DataExhausted { requested: usize, available: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
