use std::path::PathBuf;

use iarn_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("degenerate size: {0}")]
    DegenerateSize(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite activation in {0}")]
    NonFinite(String),
    #[error("training diverged at iteration {iteration} (scale {scale_h:.4}x{scale_v:.4}): {detail}")]
    Divergence {
        iteration: u64,
        scale_h: f64,
        scale_v: f64,
        detail: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {}: {reason}", path.display())]
    Image { path: PathBuf, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: {0}")]
    Dataset(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this failure: 2 usage, 3 I/O, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidScale(_) | Error::Config(_) | Error::DegenerateSize(_) | Error::Shape(_) => 2,
            Error::Io { .. } | Error::Image { .. } | Error::Checkpoint(_) | Error::Dataset(_) => 3,
            Error::NonFinite(_) | Error::Divergence { .. } => 4,
            Error::Tensor(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
