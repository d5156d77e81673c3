use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = UneError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum UneError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: header declares {expected} bytes of data, found {found}")]
    Truncation { expected: u64, found: u64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("unsupported sample size {size} (supported range {min}..={max})")]
    UnsupportedSampleSize { size: usize, min: usize, max: usize },

    #[error("rank error: requested {requested}, attainable rank is {attained}")]
    Rank { requested: usize, attained: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("unknown key: {0}")]
    Key(String),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl UneError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UneError::Io {
            path: path.into(),
            source,
        }
    }
}
