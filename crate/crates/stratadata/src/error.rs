use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"FLVD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("payload of {found} bytes does not match declared dims ({expected} bytes)")]
    PayloadMismatch { expected: usize, found: usize },
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("column ({0}, {1}) is entirely empty")]
    EmptyColumn(usize, usize),
    #[error("window {0}")]
    Window(String),
    #[error("crop size {size:?} exceeds dims {dims:?}")]
    CropTooLarge { size: [usize; 3], dims: [usize; 3] },
    #[error("no crop satisfied the channel constraint after {0} draws")]
    RetryCapExceeded(usize),
    #[error("degenerate time range [{0}, {1}]")]
    DegenerateTimeRange(f64, f64),
    #[error("split counts {0} exceed total {1}")]
    SplitExceeds(usize, usize),
}

pub type Result<T> = std::result::Result<T, DataError>;
