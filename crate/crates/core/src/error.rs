use thiserror::Error;

/// Errors produced by the library.
///
/// Variants fall into three classes (see [`ErrorClass`]) so that front ends
/// can map them to distinct exit statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("empty dataset")]
    EmptyData,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),

    #[error("score out of range: {0}")]
    ScoreOutOfRange(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters or configuration supplied by the caller.
    Usage,
    /// Input data that does not match the expected schema or ranges.
    InputSchema,
    /// Reading or writing failed.
    Io,
    /// A solver could not produce a finite answer.
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::ShapeMismatch { .. }
            | Error::InvalidTensor(_)
            | Error::EmptyData
            | Error::Schema { .. }
            | Error::MissingColumn(_)
            | Error::DuplicateSubject(_)
            | Error::ScoreOutOfRange(_)
            | Error::Json(_) => ErrorClass::InputSchema,
            Error::Csv(e) if !e.is_io_error() => ErrorClass::InputSchema,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
            Error::Numerical(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
