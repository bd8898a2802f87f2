use thiserror::Error;

/// Errors raised by tensor construction, kernels, autodiff and the optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch { op: String, shapes: Vec<Vec<usize>> },

    #[error("unknown operation kind `{0}`")]
    UnknownKind(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("graph already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl NumError {
    pub(crate) fn shape(op: &str, shapes: &[&[usize]]) -> Self {
        NumError::ShapeMismatch {
            op: op.to_string(),
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        }
    }
}

impl From<std::io::Error> for NumError {
    fn from(e: std::io::Error) -> Self {
        NumError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NumError>;
