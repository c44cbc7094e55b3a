use crate::corpus::CorpusError;
use crate::numerics::NumericsError;

/// Error type shared by the model, training, inference and evaluation layers.
#[derive(Debug, thiserror::Error)]
pub enum EcmError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("training diverged at epoch {epoch}: loss {loss} on batch ids {batch_ids:?} with lr {lr}")]
    Diverged { epoch: usize, batch_ids: Vec<usize>, lr: f64, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl EcmError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EcmError::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T, E = EcmError> = std::result::Result<T, E>;
