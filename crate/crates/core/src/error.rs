use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("decomposition failure: {0}")]
    Decomposition(String),
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("non-finite integrand value {value} at node {node:?}")]
    NonFinite { node: Vec<f64>, value: f64 },
    #[error("sample failure rate {failures}/{samples} exceeds the allowed fraction")]
    TooManyFailures { failures: u64, samples: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
