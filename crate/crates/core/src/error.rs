use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is outside the codec range (|x| < {bound})")]
    OutOfRange { value: f64, bound: f64 },
    #[error("fixed-point overflow detected: {0}")]
    OverflowDetected(String),
    #[error("operating-system entropy unavailable: {0}")]
    EntropyUnavailable(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("two share bundles claim the same role ({0})")]
    RoleConflict(&'static str),
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
    #[error("kernel matrix rejected: {0}")]
    BadKernel(String),
    #[error("hyperparameter grid is empty")]
    GridEmpty,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("at least {needed} trials required, got {got}")]
    InsufficientTrials { needed: usize, got: usize },

    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("truncated input: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("timed out after {0:?} waiting for {1}")]
    Timeout(std::time::Duration, &'static str),
    #[error("peer reported error {code}: {message}")]
    PeerError { code: u16, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("channel closed")]
    ChannelClosed,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
