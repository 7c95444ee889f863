use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("label {label} out of bound {bound}")]
    LabelBound { label: u64, bound: u64 },
    #[error("pool exhausted before reaching the target label")]
    PoolExhausted,
    #[error("retry budget exhausted after {0} attempts")]
    BudgetExhausted(u64),
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
