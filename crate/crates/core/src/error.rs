use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlvError {
    #[error("shape mismatch in layer {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("action outside declared action space: {0}")]
    InvalidAction(String),

    #[error("cannot insert into a frozen replay pool")]
    FrozenPool,

    #[error("cannot sample from an empty replay pool")]
    EmptyPool,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RlvError>;
