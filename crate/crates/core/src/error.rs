use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdxError {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {what} is {got}, at most {max} supported")]
    Capacity {
        what: &'static str,
        got: usize,
        max: usize,
    },
    /// A fitting routine did not produce a usable estimate.
    #[error("estimation error: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, FdxError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(FdxError::Domain(msg.into()))
}
