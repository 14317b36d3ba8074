use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch: {msg}")]
    Shape { op: &'static str, msg: String },
    #[error("{op}: {msg}")]
    Argument { op: &'static str, msg: String },
    #[error("backward called on a non-scalar value of shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an untracked value")]
    Untracked,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape { op, msg: msg.into() })
}
