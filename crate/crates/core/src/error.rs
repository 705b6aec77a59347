use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied data has the wrong shape or range.
    #[error("input error: {0}")]
    Input(String),

    /// A protocol step could not complete (missing ballot, malformed tally, ...).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A block signature failed to verify.
    #[error("authentication error: {0}")]
    Authentication(String),

    /// A block does not extend the current chain tip.
    #[error("ordering error: {0}")]
    Ordering(String),

    /// Every update was rejected, so there was nothing to aggregate.
    #[error("round failure: {0}")]
    RoundFailure(String),

    /// Binary or text decoding failed.
    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
