use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or mismatched shapes/architectures.
    #[error("configuration error: {0}")]
    Config(String),
    /// API misuse, e.g. stepping a finished episode.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed checkpoint, dataset or config file contents.
    #[error("format error: {0}")]
    Format(String),
    #[error("generation error: {0}")]
    Generation(String),
    /// The requested resource is not available yet (e.g. sampling an empty replay buffer).
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for the CLI: 1 for user-facing problems, 2 for internal ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Format(_) | Error::Io(_) => 1,
            Error::Generation(_) | Error::Unavailable(_) | Error::Numeric(_) => 2,
        }
    }
}
