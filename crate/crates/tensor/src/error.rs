use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: dimension {dim} mismatch (expected {expected}, found {found})")]
    ShapeMismatch {
        op: &'static str,
        dim: usize,
        expected: usize,
        found: usize,
    },
    #[error("{op}: expected rank {expected}, found rank {found}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("shape {shape:?} holds {expected} elements but {found} values were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward called on a tensor that is not part of a recorded graph")]
    NotRecorded,
    #[error("graph was already consumed by a previous backward pass")]
    GraphConsumed,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
