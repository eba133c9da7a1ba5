use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned covariance: Cholesky failed at jitter {jitter:e} (smallest pivot {smallest_pivot:e})")]
    IllConditioned { smallest_pivot: f64, jitter: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for failures caused by floating-point conditioning rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::IllConditioned { .. } | Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
