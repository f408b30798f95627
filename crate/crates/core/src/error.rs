use thiserror::Error;

/// Errors produced by the transport, quantization and cell-problem routines.
#[derive(Debug, Error)]
pub enum UotError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, UotError>;

pub(crate) fn invalid(msg: impl Into<String>) -> UotError {
    UotError::InvalidArgument(msg.into())
}
