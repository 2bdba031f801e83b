use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PPM parse error at byte offset {offset}: {msg}")]
    Ppm { offset: usize, msg: String },
    #[error("manifest validation failed: {}", .0.join("; "))]
    Manifest(Vec<String>),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("score file: {0}")]
    ScoreFile(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found} does not match supported version {expected}")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
