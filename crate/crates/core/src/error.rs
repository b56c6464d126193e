//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// All failures surfaced by the pipeline.
///
/// Variants are split between validation problems (bad inputs, bad
/// configuration) and runtime problems (I/O mid-run, diverging training).
/// [`Error::is_validation`] drives the CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown label {label:?} (expected negative, neutral or positive)")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error("{path}:{line}: unknown topic {topic:?}")]
    UnknownTopic {
        path: PathBuf,
        line: usize,
        topic: String,
    },

    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },

    #[error("label {label} is not admissible for a {arity}-class corpus (entry {id:?})")]
    InadmissibleLabel {
        id: String,
        label: String,
        arity: u8,
    },

    #[error("entry {id:?} has empty text")]
    EmptyText { id: String },

    #[error("{path}: corpus has no data rows")]
    EmptyCorpus { path: PathBuf },

    #[error("splits share ids: {}", ids.join(", "))]
    SplitOverlap { ids: Vec<String> },

    #[error("arity mismatch: {message}")]
    ArityMismatch { message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint backend mismatch: expected {expected}, found {found}")]
    BackendMismatch { expected: String, found: String },

    #[error("training failed: {0}")]
    Train(String),
}

impl Error {
    /// True when the error is the caller's fault (bad data, bad config).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Train(_))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
