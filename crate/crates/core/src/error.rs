use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SegError>;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("wrong model kind: expected {expected}, found {found}")]
    ModelKind { expected: String, found: String },

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl SegError {
    /// True for failures caused by the numbers themselves (NaN/Inf during
    /// training or checking) rather than by the data or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, SegError::NonFinite(_))
    }
}
