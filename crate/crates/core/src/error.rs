use thiserror::Error;

/// Errors raised by the library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments: wrong dimensions, out-of-range parameters, malformed config.
    #[error("usage error: {0}")]
    Usage(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Fixed-point iteration did not settle; the parameter set is reported, not dropped.
    #[error("state evolution diverged for {params} after {iterations} iterations")]
    Divergence { params: String, iterations: usize },

    /// An invariant the algebra guarantees was broken; indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
