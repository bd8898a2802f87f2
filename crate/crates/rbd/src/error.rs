use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbdError {
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid muscle set: {0}")]
    InvalidMuscles(String),

    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,

    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },

    #[error("activation {index} = {value} outside [0, 1]")]
    ActivationOutOfRange { index: usize, value: f64 },

    #[error("target torque outside the muscle torque polytope (residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("tree file: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for RbdError {
    fn from(e: std::io::Error) -> Self {
        RbdError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RbdError {
    fn from(e: serde_json::Error) -> Self {
        RbdError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RbdError>;
