use std::path::PathBuf;

use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum SsnError {
    #[error("invalid interval [{start}, {end}): end must be greater than start and both finite")]
    InvalidInterval { start: f64, end: f64 },

    #[error("proposal [{start}, {end}) lies outside the video extent [0, {video_length})")]
    ProposalOutOfBounds {
        start: f64,
        end: f64,
        video_length: f64,
    },

    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no {kind} samples available after label assignment")]
    EmptyPool { kind: &'static str },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("video '{video}' has no actionness scores")]
    MissingActionness { video: String },

    #[error("ground truth set is empty; recall is undefined")]
    NoGroundTruth,

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}:{line}:{column}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SsnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SsnError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        SsnError::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for malformed-input errors (parse failures, schema and format
    /// violations); the CLI maps these to exit code 2.
    pub fn is_input_error(&self) -> bool {
        matches!(self, SsnError::Format { .. } | SsnError::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, SsnError>;
