use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Malformed XML, with the byte offset where the reader gave up.
    #[error("XML parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("unsupported document encoding `{0}` (only UTF-8 is accepted)")]
    Encoding(String),

    /// Well-formed input that violates the expected document structure.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("link {link}: sentence `{id}` not found in {side} document")]
    DanglingId {
        link: String,
        id: String,
        side: &'static str,
    },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("line count mismatch: {left} vs {right} lines")]
    LineCountMismatch { left: usize, right: usize },

    #[error("write failed after {written} units: {source}")]
    PartialWrite {
        written: usize,
        #[source]
        source: io::Error,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("download failed with HTTP status {status}")]
    Download { status: u16 },

    #[error("integrity error: expected {expected} bytes, got {actual}")]
    Integrity { expected: u64, actual: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step `{step}`: {message}")]
    Validation { step: String, message: String },

    #[error("score file has {available} values but the corpus needs line {needed}")]
    ScoreLength { available: usize, needed: usize },

    #[error("non-finite score from filter `{0}`")]
    NonFinite(String),

    #[error("language profile training failed: {0}")]
    Training(String),

    #[error("unsupported language pair {source_lang}-{target}; supported: {supported}")]
    UnsupportedPair {
        source_lang: String,
        target: String,
        supported: String,
    },

    #[error("backend {address} failed: {message}")]
    Upstream { address: String, message: String },
}

impl Error {
    pub(crate) fn xml(offset: u64, err: impl std::fmt::Display) -> Self {
        Error::Xml {
            offset,
            message: err.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Protocol(err.to_string())
    }
}
