//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty selection: {context}")]
    EmptySelection { context: &'static str },

    #[error("degenerate anchor: norm {norm} below threshold")]
    DegenerateAnchor { norm: f64 },

    #[error("cost meter has no baseline texts")]
    NoBaseline,

    #[error("encoder unavailable: {reason}")]
    EncodeUnavailable { reason: String },

    #[error("invalid provider config: {0}")]
    InvalidConfig(String),

    #[error("ranking length mismatch: {left} vs {right}")]
    RankingLengthMismatch { left: usize, right: usize },

    #[error("rank variance needs at least 2 channels, got {0}")]
    TooFewChannels(usize),

    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("qrels reference unknown ids: {ids:?}")]
    DanglingIds { ids: Vec<String> },

    #[error("task invalid: {0}")]
    InvalidTask(String),

    #[error("empty delta vector for bootstrap")]
    EmptyDeltas,

    #[error("parse error at line {line}, column {column}: {message}")]
    DslParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("proposer failed: {0}")]
    ProposerFailed(String),

    #[error("ledger corrupt at record {index}: {message}")]
    LedgerCorrupt { index: usize, message: String },

    #[error("training error: {0}")]
    Train(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for transient failures a caller may retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::EncodeUnavailable { .. })
    }
}
