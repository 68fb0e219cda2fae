use fluvgan::GanError;
use geovalid::ValidError;
use stratadata::DataError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::Config(_) | GanError::Grad(_) => Self::Config(e.to_string()),
            GanError::NonFinite { .. } => Self::Numerical(e.to_string()),
            GanError::Valid(v) => v.into(),
            GanError::Format(_) | GanError::Io(_) | GanError::Json(_) => Self::Data(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::SplitExceeds(..) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ValidError> for CliError {
    fn from(e: ValidError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<gradcore::GradError> for CliError {
    fn from(e: gradcore::GradError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        Self::Data(e.to_string())
    }
}
