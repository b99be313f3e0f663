use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument, violated precondition or malformed input data.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An iterative solver ran out of iterations.
    #[error("solver did not converge after {iterations} iterations (residual gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
