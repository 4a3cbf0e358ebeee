use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller asked for something that cannot be configured.
    Config,
    /// Input data, files or checkpoints failed validation.
    Validation,
    /// A computation produced a non-finite value or failed a numeric check.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("loss must be a single element, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("gradient check failed: max relative error {error:e} exceeds {tolerance:e}")]
    GradCheck { error: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Mmct(#[from] MmctError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::NonFinite { .. }
            | Error::NonFiniteInput(_)
            | Error::NonFiniteGradient(_)
            | Error::GradCheck { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

/// Failures specific to the MMCT tensor file format.
#[derive(Debug, Error)]
pub enum MmctError {
    #[error("bad magic bytes {0:?}, expected \"MMCT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported MMCT version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated MMCT data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("MMCT extents {0:?} overflow the addressable size")]
    ExtentOverflow(Vec<u64>),
    #[error("MMCT extent of zero in shape {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("MMCT payload contains a non-finite value")]
    NonFinite,
}
