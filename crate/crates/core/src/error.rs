use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading dataset files.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated file, needed {needed} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },
    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: file size {len} is not a multiple of the {record}-byte record size")]
    RecordSize {
        path: PathBuf,
        len: usize,
        record: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or option is outside its valid range.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller broke a precondition (shape mismatch, invalid bin, stale cache).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
