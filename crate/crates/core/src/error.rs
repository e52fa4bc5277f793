use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a numeric or structural precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// The input is well formed but outside the family an operation supports.
    #[error("domain error: {0}")]
    Domain(String),

    /// A protocol step was attempted out of order, e.g. reusing a consumed EPR pair.
    #[error("protocol order error: {0}")]
    ProtocolOrder(String),

    /// Every violation found while validating an experiment configuration.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
