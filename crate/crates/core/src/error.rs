use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid argument to {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Memory(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T> {
    Err(Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

pub(crate) fn invalid<T>(op: &'static str, reason: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument {
        op,
        reason: reason.into(),
    })
}
