use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes in {0}")]
    BadMagic(PathBuf),

    #[error("malformed interchange header: {0}")]
    Header(String),

    #[error("payload length mismatch: header implies {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("unknown class id {0}")]
    UnknownClass(i32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("class {class} has too few samples: {detail}")]
    InsufficientSamples { class: i32, detail: String },

    #[error("objective returned non-finite value {value} at {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    #[error("gaussian process system not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("sanity gate failed: variant net (M={m}, i={variant}) reached training accuracy {accuracy:.3} < {required:.3}")]
    SanityGate {
        m: usize,
        variant: usize,
        accuracy: f64,
        required: f64,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
