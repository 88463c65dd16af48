//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on arguments or configuration was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// Tensor shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A binary file did not match its format contract.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}: {message}")]
    Training { iteration: usize, message: String },

    /// Attack optimization produced a non-finite loss.
    #[error("optimization failed at iteration {iteration}: {message}")]
    Optimization { iteration: usize, message: String },

    /// Channel calibration could not be solved.
    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
