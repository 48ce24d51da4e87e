//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the pipeline.
///
/// Every variant renders as `kind: detail` so the CLI can emit one
/// machine-parsable line per failure.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file contents (bad magic, truncated payload, bad CRC).
    #[error("format: {0}")]
    Format(String),

    /// Well-formed file in an encoding this crate does not handle.
    #[error("unsupported-format: {0}")]
    UnsupportedFormat(String),

    /// An operation received no data to work on.
    #[error("empty-input: {0}")]
    EmptyInput(String),

    /// Input shorter than the minimum the operation requires.
    #[error("too-short: length {len}, need at least {min}")]
    TooShort { len: usize, min: usize },

    /// Dimension or length mismatch.
    #[error("shape: {0}")]
    Shape(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric: {0}")]
    Numeric(String),

    /// Value outside the operation's mathematical domain.
    #[error("domain: {0}")]
    Domain(String),

    /// Invalid configuration value.
    #[error("config: {0}")]
    Config(String),

    /// Confusion-matrix row with no samples cannot be normalized.
    #[error("zero-row: confusion row for class {0} sums to zero")]
    ZeroRow(usize),

    /// Model file whose type tag does not match the requested loader.
    #[error("type-tag: expected model type {expected}, file holds type {found}")]
    TypeTag { expected: u8, found: u8 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
