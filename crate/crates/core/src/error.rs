use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown dataset `{0}` (expected mnist, fashion-mnist, cifar10, svhn, omniglot, synthetic-blobs or dir:<path>)")]
    UnknownDataset(String),

    #[error("dataset `{name}` ({split}) has {available} samples, {requested} requested")]
    NotEnoughSamples { name: String, split: String, requested: usize, available: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownDataset(_) | Error::NotEnoughSamples { .. } | Error::Io { .. } | Error::Corrupt { .. } => {
                ErrorClass::Data
            }
            Error::Numeric(_) => ErrorClass::Numeric,
            Error::InvalidArgument(_) | Error::ShapeMismatch { .. } | Error::Config(_) => ErrorClass::Config,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt { path: path.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Returns `Err(InvalidArgument)` with the formatted message unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err($crate::Error::InvalidArgument(format!($($msg)+)));
        }
    };
}
pub(crate) use ensure;
