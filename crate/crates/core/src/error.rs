use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument or configuration outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky factorisation failed at every jitter level tried.
    #[error("cholesky factorisation failed (jitter levels tried: {jitters:?})")]
    Cholesky { jitters: Vec<f64> },

    #[error("inference error: {0}")]
    Inference(String),

    #[error("acquisition error: {0}")]
    Acquisition(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
