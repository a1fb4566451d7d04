use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A construction was requested outside the region where it exists.
    #[error("{message} (bound {bound:.2})")]
    Infeasible { message: String, bound: f64 },

    /// A structural condition required by a construction does not hold.
    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("empty cost interval at step {step}: [{lower}, {upper}]")]
    EmptyInterval { step: usize, lower: f64, upper: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
