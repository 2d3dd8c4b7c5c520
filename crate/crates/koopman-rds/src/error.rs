//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A simulated path produced a non-finite state. `path` is the ensemble
    /// member index (0 for single-trajectory integrations).
    #[error("integration diverged at step {step} of path {path}")]
    IntegrationDiverged { step: usize, path: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported layout for this operation: {0}")]
    UnsupportedLayout(String),

    #[error("unsupported model kind for this operation: {0}")]
    UnsupportedKind(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the CLI: 2 usage/config, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Usage(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}
