use std::path::PathBuf;

use thiserror::Error;

use crate::data::Entity;
use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: unknown group `{token}`", file.display())]
    UnknownGroup {
        file: PathBuf,
        line: usize,
        token: String,
    },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("no negatives available for {0}")]
    NoNegatives(Entity),
    #[error("{entity}: {available} eligible negatives, {needed} required")]
    InsufficientNegatives {
        entity: Entity,
        needed: usize,
        available: usize,
    },
    #[error("empty pair set for {0}")]
    EmptyPairs(Entity),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss at epoch {epoch} (group {loss_group}, user {loss_user})")]
    NonFiniteLoss {
        epoch: usize,
        loss_group: f64,
        loss_user: f64,
    },
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn checkpoint(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::Tensor(TensorError::NonFinite { .. })
        )
    }
}
