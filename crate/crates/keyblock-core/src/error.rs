//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input content; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate doc_id {doc_id} at line {line}")]
    DuplicateDocId { doc_id: String, line: usize },

    #[error("duplicate qid {qid} at line {line}")]
    DuplicateQid { qid: String, line: usize },

    #[error("grade out of range: {grade} (must be 0, 1 or 2)")]
    GradeOutOfRange { grade: i64 },

    #[error("invalid run: {0}")]
    InvalidRun(String),

    #[error("{op} requires {expected} IDF variant, got {found}")]
    VariantMismatch {
        op: &'static str,
        expected: &'static str,
        found: &'static str,
    },

    #[error("{0}")]
    InvalidParam(String),

    #[error("learned strategy requires a bound scorer")]
    MissingScorer,

    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite loss during training: {0}")]
    NonFiniteLoss(String),

    #[error("no eligible document to sample from for qid {qid}")]
    EmptyPool { qid: String },

    #[error("expansion pool too small: need {need}, have {have}")]
    PoolTooSmall { need: usize, have: usize },

    #[error("no evaluable query (every query skipped or excluded)")]
    NoEvaluableQuery,
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}
