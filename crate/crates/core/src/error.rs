use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context}: {left:?} vs {right:?}")]
    Dimension {
        context: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("stale state: {0}")]
    State(String),

    #[error("weight file format error: {0}")]
    Format(String),

    #[error("weight file corrupted: {0}")]
    Corruption(String),

    #[error("undefined rate: {0}")]
    UndefinedRate(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            context: context.into(),
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
