use thiserror::Error;

use crate::engine::Phase;

/// Errors surfaced by the engine and its loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed url at byte {offset}: {detail}")]
    MalformedUrl { offset: usize, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("operation requires phase {expected:?}, engine is in {actual:?}")]
    Phase { expected: Phase, actual: Phase },

    #[error("format error at line {line}: {detail}")]
    Format { line: usize, detail: String },

    #[error("unknown schema version {0}")]
    UnknownVersion(u64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
