use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("non-finite value in {what} at element {index}")]
    NonFiniteData { what: String, index: usize },

    #[error("unknown action {name:?} on line {line}")]
    UnknownAction { name: String, line: usize },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("need at least {needed} videos, have {available}")]
    TooFewVideos { needed: usize, available: usize },

    #[error("bad specification: {0}")]
    BadSpec(String),

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("need at least {needed} frames for clustering, have {available}")]
    TooFewFrames { needed: usize, available: usize },

    #[error("no anchor has both a positive and a negative ({skipped} skipped)")]
    NoValidAnchors { skipped: usize },

    #[error("the labeled set is empty")]
    EmptyLabeledSet,

    #[error("no labels stored for video {0}")]
    MissingLabels(String),

    #[error("empty label sequence")]
    EmptySequence,

    #[error("checkpoint format {found:?} is not supported (expected {expected:?})")]
    CheckpointVersionMismatch { expected: String, found: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by a failing computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedFile { .. }
                | Error::NonFiniteData { .. }
                | Error::UnknownAction { .. }
                | Error::LengthMismatch { .. }
                | Error::TooFewVideos { .. }
                | Error::BadSpec(_)
                | Error::ShapeError(_)
                | Error::MissingLabels(_)
                | Error::EmptySequence
                | Error::CheckpointVersionMismatch { .. }
                | Error::Io { .. }
        )
    }
}
