use thiserror::Error;

use crate::policy::Decision;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("malformed tree: {0}")]
    InvalidTree(String),

    #[error("prefix of length {t} is outside the support of the process")]
    OutsideSupport { t: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(
        "residual {residual:e} exceeds tolerance {tol:e} with K={k}; K >= {required_k} suffices"
    )]
    ToleranceNotReached {
        k: usize,
        tol: f64,
        residual: f64,
        required_k: u64,
    },

    #[error("predicted {predicted:.3e} base-simulator calls exceeds the ceiling of {ceiling}")]
    BudgetCeiling { predicted: f64, ceiling: u64 },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("policy aborted at t={t}: {source}")]
    PolicyAborted {
        t: usize,
        trace: Vec<Decision>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
