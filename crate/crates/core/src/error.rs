use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("{0}: non-finite value")]
    NonFinite(&'static str),
    #[error("{0}: vector norm below threshold")]
    DegenerateVector(&'static str),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("orthogonal loss undefined: every slot is empty")]
    UndefinedLoss,
    #[error("empty slot {slot} needs a noise row but no frozen noise was supplied")]
    MissingNoise { slot: usize },
    #[error("numerical failure at step {step}: {detail}")]
    NumericalFailure { step: usize, detail: String },
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            op,
            expected: alloc::format!("{}x{}", expected.0, expected.1),
            found: alloc::format!("{}x{}", found.0, found.1),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
