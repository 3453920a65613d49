use std::io;

use thiserror::Error;

/// Errors raised anywhere in the training stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, ranges or settings that cannot describe a valid run.
    #[error("configuration error: {0}")]
    Config(String),
    /// A NaN or infinity showed up in an input, gradient, loss or parameter.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An API was called out of order (stale cache, stepping a finished episode, empty buffer).
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed or incompatible checkpoint / record file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
