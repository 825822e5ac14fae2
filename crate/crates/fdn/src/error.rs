use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("graph output is detached from every trainable parameter")]
    DetachedGraph,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("parameter `{0}` already registered")]
    DuplicateParam(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("parameter budget violated: counted {count}, target {target} (tolerance {tolerance})")]
    Budget {
        count: usize,
        target: usize,
        tolerance: f64,
    },

    #[error("training diverged at epoch {epoch}, update {update}: {what}")]
    Diverged {
        epoch: usize,
        update: u64,
        what: String,
    },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
