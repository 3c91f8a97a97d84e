use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("row {row} is not a probability vector: {reason}")]
    NotSimplex { row: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid time: {0}")]
    Time(String),

    #[error("enumeration budget exceeded: {needed} completions > {budget}")]
    EnumerationBudget { needed: f64, budget: f64 },

    #[error("observed tokens have zero probability under the task joint")]
    InconsistentEvidence,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite loss at step {step} (batch example {batch_index})")]
    NonFiniteLoss { step: usize, batch_index: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("decode failed: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
