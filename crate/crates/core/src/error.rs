//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Errors produced by pipeline operations.
///
/// The CLI maps these onto process exit codes, so the variants are kept
/// coarse: bad arguments/configuration, filesystem trouble, malformed
/// on-disk data, and numeric blow-ups.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation was called with arguments outside its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file or flag values violate an invariant.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem-level failure (missing file, unwritable path, ...).
    #[error("io error: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents do not match the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// A container declares a version this build does not understand.
    #[error("unsupported version: {0}")]
    UnsupportedVersion(u32),

    /// A numeric procedure produced a non-finite value.
    #[error("numeric error at step {step}: {message}")]
    Numeric { step: usize, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
