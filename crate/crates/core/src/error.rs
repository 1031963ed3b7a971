use std::path::PathBuf;

use lsa_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    /// Inconsistent plan, placement, or model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    /// A question is well formed but has no unique answer for the scene.
    #[error("question has no unique answer: {0}")]
    Unanswerable(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Validation problems (bad input) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Data(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
