use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..={max}", max = crate::statevector::MAX_QUBITS)]
    QubitCount(usize),

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("malformed layout token `{0}`")]
    LayoutToken(String),

    #[error("layout token `{token}` expands to no gates for {qubits} qubit(s)")]
    EmptyLayer { token: String, qubits: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("parameter {0} belongs to a two-qubit slot; shifted-circuit evaluation is only defined for single-qubit parameters")]
    UnsupportedShift(usize),

    #[error("tape does not match this call: {0}")]
    StaleTape(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("{path}: wrong IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    IdxMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated IDX file, need {expected} bytes, found {actual}")]
    IdxTruncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("IDX sample count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config key `{key}`: {message}")]
    ConfigKey { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dimension(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}
