use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error("kernel of size {size} does not fit a {width}x{height} image")]
    KernelTooLarge { size: usize, width: usize, height: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// Stable small integer identifying the error class.
    ///
    /// Shared by the C bindings and the CLI; values never change meaning.
    pub fn code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Format { .. } => 2,
            Error::Unsupported(_) => 3,
            Error::KernelTooLarge { .. } => 4,
            Error::DimensionMismatch(_) => 5,
            Error::InvalidArgument(_) => 6,
            Error::IndexOutOfRange(_) => 7,
            Error::Version { .. } => 8,
            Error::InvalidModel(_) => 9,
            Error::Empty(_) => 10,
            Error::Numerical(_) => 11,
        }
    }
}
