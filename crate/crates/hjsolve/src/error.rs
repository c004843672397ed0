use std::path::PathBuf;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum HjError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown problem id `{0}`")]
    UnknownProblem(String),

    #[error("oracle does not support problem `{0}`: {1}")]
    UnsupportedOracle(String, String),

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("checkpoint {path} incompatible: {reason}")]
    CheckpointMismatch { path: PathBuf, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        /// Parameters from before the failing epoch, for checkpointing.
        last_good: Box<crate::network::MlpParams>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HjError>;
