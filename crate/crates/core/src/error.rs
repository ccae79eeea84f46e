use thiserror::Error;

/// Errors raised by code construction, validation and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// A code, channel, decoder or trainer parameter is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An input sequence does not have the length the operation requires.
    #[error("{what}: expected length {expected}, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// No embedded QPP interleaver parameters for the requested blocklength.
    #[error("no embedded QPP parameters for K = {k}; supported: {supported}")]
    UnsupportedBlockLength { k: usize, supported: String },

    /// An operation was invoked in a state that does not support it.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A text or JSON input could not be parsed.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Length {
            what,
            expected,
            actual,
        })
    }
}
