//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by trainer, analysis, and IO operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (dimension mismatch,
    /// group too small, token outside the vocabulary, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric quantity that must be finite was not; the step is aborted.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Two runs or artifacts that must line up do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml encode error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
