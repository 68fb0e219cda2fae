use thiserror::Error;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grad(#[from] gradcore::GradError),
    #[error(transparent)]
    Valid(#[from] geovalid::ValidError),
    #[error("non-finite loss at iteration {iteration}: g_loss {g_loss}, d_loss {d_loss}; {params}")]
    NonFinite { iteration: u64, g_loss: f64, d_loss: f64, params: String },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GanError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(GanError::Config(msg.into()))
}
