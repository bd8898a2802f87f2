use thiserror::Error;

use hdys_numcore::NumError;
use hdys_rbd::RbdError;

#[derive(Debug, Error)]
pub enum HdysError {
    #[error(transparent)]
    Rbd(#[from] RbdError),

    #[error(transparent)]
    Num(#[from] NumError),

    #[error("frame {frame}: {source}")]
    AtFrame { frame: usize, source: RbdError },

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),

    #[error("schema version mismatch: expected `{expected}`, found `{found}`")]
    Version { expected: String, found: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("dead configuration: {0}")]
    DeadConfig(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),

    #[error("dataset not found at {path}; run `hdysctl gen-data --out {path}` first")]
    MissingDataset { path: String },
}

impl HdysError {
    /// Usage and configuration problems, as opposed to domain failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            HdysError::UnknownKey(_) | HdysError::Config { .. } | HdysError::Invalid(_)
        )
    }
}

impl From<std::io::Error> for HdysError {
    fn from(e: std::io::Error) -> Self {
        HdysError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HdysError {
    fn from(e: serde_json::Error) -> Self {
        HdysError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HdysError>;
