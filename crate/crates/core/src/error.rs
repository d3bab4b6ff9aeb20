use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward called on a tape that did not record operations")]
    NotRecorded,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        CoreError::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
