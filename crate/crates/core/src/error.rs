use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RltError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RltError {
    /// Input values that cannot be processed (NaN, infinities, bad shapes).
    #[error("invalid data: {0}")]
    DataValidity(String),

    /// Tubelet configuration does not fit the video.
    #[error("configuration error on axis {axis}: {message}")]
    Config { axis: &'static str, message: String },

    #[error("index out of bounds: {0}")]
    Bounds(String),

    /// A caller passed arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// An internal contract was violated by the input structure.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Packed structure whose boundaries or metadata disagree with its payload.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("stream ended after {frames_received} of {frames_expected} frames: {message}")]
    Stream {
        frames_received: usize,
        frames_expected: usize,
        message: String,
    },

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RltError {
    pub fn usage(msg: impl Into<String>) -> Self {
        RltError::Usage(msg.into())
    }

    pub(crate) fn parse(offset: u64, msg: impl Into<String>) -> Self {
        RltError::Parse {
            offset,
            message: msg.into(),
        }
    }

    /// True for errors caused by configuration (exit code 2 in the CLI).
    pub fn is_config(&self) -> bool {
        matches!(self, RltError::Config { .. } | RltError::Usage(_))
    }
}
