use std::path::PathBuf;

use thiserror::Error;

use crate::train::LossRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] picrnn_autodiff::Error),

    #[error(transparent)]
    Model(#[from] picrnn_core::Error),

    #[error("unsupported architecture: {0}")]
    Arch(String),

    #[error("invalid training config: {0}")]
    Config(String),

    #[error("rollout produced a non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("training diverged at epoch {epoch} (loss {loss}); parameters restored to the last checkpoint")]
    Diverged { epoch: usize, loss: f64, record: Box<LossRecord> },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Model(e.into())
    }
}
