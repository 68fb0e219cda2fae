use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("patch {patch:?} does not fit extents {extent:?}")]
    PatchTooLarge { patch: [usize; 3], extent: [usize; 3] },
    #[error("empty training set")]
    EmptyTrainingSet,
}

pub type Result<T> = std::result::Result<T, ValidError>;
