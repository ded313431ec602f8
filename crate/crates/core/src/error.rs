use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value or shape is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called out of order (e.g. backward without a forward tape).
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite number reached a place that requires finite values.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Sampling from an empty buffer or an empty file.
    #[error("empty source: {0}")]
    EmptySource(String),

    /// A binary or text file could not be decoded.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that the CLI reports with the configuration exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
