use thiserror::Error;

use crate::training::TrainTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires univariate input (d = 1), network has d = {0}")]
    WrongDimension(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate network: {0}")]
    DegenerateNetwork(String),

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize, trace: Box<TrainTrace> },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("explicit labeling required for {0} mixture components")]
    TooManyComponents(usize),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by bad user input (files, flags) rather than runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::DimensionMismatch { .. }
                | Error::WrongDimension(_)
                | Error::InvalidParameter(_)
                | Error::EmptyInput(_)
                | Error::TooManyComponents(_)
        )
    }
}
