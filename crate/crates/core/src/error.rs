//! Error type shared by all core modules.

use alloc::string::String;

/// Errors raised by the core numerics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// Tensor/layer dimension mismatch.
    #[error("shape error: {0}")]
    Shape(String),
    /// Structured data does not match its declared layout (wrong joint
    /// count, wrong coordinate count, ...).
    #[error("format error: {0}")]
    Format(String),
    /// Values are structurally fine but numerically invalid (NaN,
    /// infinity, out of declared range).
    #[error("data error: {0}")]
    Data(String),
    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Invalid runtime input (e.g. out-of-vocabulary token id).
    #[error("input error: {0}")]
    Input(String),
    /// Training diverged or produced a non-finite quantity. The message
    /// carries the epoch index or the offending parameter name.
    #[error("training error: {0}")]
    Training(String),
    /// Too few samples for a statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A matrix expected to be positive semi-definite is not.
    #[error("matrix is not PSD: {0}")]
    NotPsd(String),
    /// Invariant violation inside the library itself.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;

impl CoreError {
    pub fn shape(msg: impl core::fmt::Display) -> Self {
        CoreError::Shape(alloc::format!("{msg}"))
    }
    pub fn format(msg: impl core::fmt::Display) -> Self {
        CoreError::Format(alloc::format!("{msg}"))
    }
    pub fn config(msg: impl core::fmt::Display) -> Self {
        CoreError::Config(alloc::format!("{msg}"))
    }
    pub fn internal(msg: impl core::fmt::Display) -> Self {
        CoreError::Internal(alloc::format!("{msg}"))
    }
    pub fn training(msg: impl core::fmt::Display) -> Self {
        CoreError::Training(alloc::format!("{msg}"))
    }
}
