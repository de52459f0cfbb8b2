use std::path::PathBuf;

use thiserror::Error;

use crate::optimize::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("{path}: {message} (at {position})")]
    Parse {
        path: PathBuf,
        position: String,
        message: String,
    },

    #[error("learning rate {eta} too large for the Markov operator; must be <= {max}")]
    EtaTooLarge { eta: f64, max: f64 },

    #[error("optimization diverged at iteration {iter}: {reason}")]
    Diverged {
        iter: usize,
        reason: String,
        trace: Box<RunTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(
        path: &std::path::Path,
        position: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            position: position.into(),
            message: message.into(),
        }
    }
}
