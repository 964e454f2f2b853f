use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: non-finite value in result")]
    NonFinite { op: &'static str },
    #[error("{op}: operands recorded on different tapes")]
    TapeMismatch { op: &'static str },
    #[error("backward() already ran on this tape")]
    TapeConsumed,
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("backward root is not recorded on a tape")]
    DetachedRoot,
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Msg(String),
}

impl Error {
    pub fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }

    pub fn msg(msg: impl Into<String>) -> Self {
        Error::Msg(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
