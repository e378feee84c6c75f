use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The request needs more memory than the configured simulator cap allows.
    #[error("capacity exceeded: {what} needs {required_bytes} bytes ({detail})")]
    Capacity {
        what: String,
        required_bytes: u128,
        detail: String,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown sample id {0:?}")]
    Lookup(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("preprocessing failed: {0}")]
    Preprocess(String),

    #[error("cache corruption for {id:?}: {reason}")]
    Corruption { id: String, reason: String },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("metric undefined for {label:?}: {reason}")]
    UndefinedMetric { label: String, reason: String },

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("checkpoint config hash mismatch: file has {found}, expected {expected}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("benchmark lock held: {0}")]
    Locked(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("index database error: {0}")]
    Sqlite(#[from] rusqlite::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }
}
