use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown point id {0}")]
    UnknownPoint(usize),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("recurrent domain: complement is empty")]
    RecurrentDomain,
    #[error("set is not contained in the domain")]
    NotContained,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("construction aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;
