use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    /// Incompatible shapes, kernels, strides or channel counts.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate batch: batch statistics need at least 2 items, got {0}")]
    DegenerateBatch(usize),
    /// A gradient or loss contained NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// API misuse such as calling backward on a non-scalar.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, GradError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(GradError::Config(msg.into()))
}
