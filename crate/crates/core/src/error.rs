use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented constraint.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data is malformed or out of range.
    #[error("data error: {0}")]
    Data(String),
    /// A caller-supplied argument is out of range.
    #[error("argument error: {0}")]
    Argument(String),
    /// An internal invariant was broken (stale cache, over-accumulation, ...).
    #[error("internal error: {0}")]
    Internal(String),
    /// Values cannot be represented in the compressed format.
    #[error("encoding error: {0}")]
    Encoding(String),
    /// A compressed or serialized stream is malformed.
    #[error("decoding error at byte {offset}: {reason}")]
    Decoding { offset: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn decoding(offset: usize, reason: impl Into<String>) -> Self {
        Error::Decoding {
            offset,
            reason: reason.into(),
        }
    }
}
