use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance is not finite at (s, t) = ({s}, {t})")]
    NonFiniteCovariance { s: f64, t: f64 },

    #[error("span is singular: reciprocal condition estimate {rcond:e}")]
    SingularSpan { rcond: f64 },

    /// `index` counts from 1.
    #[error("family is degenerate at member {index}: residual norm {norm:e}")]
    DegenerateFamily { index: usize, norm: f64 },

    #[error("conditioning variable has zero variance")]
    DegenerateVariable,

    #[error("grid too coarse: {nodes} nodes, need at least {required}")]
    Resolution { nodes: usize, required: usize },

    #[error("circulant embedding failed: eigenvalue {eigenvalue:e}")]
    EmbeddingFailure { eigenvalue: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("estimator error: {0}")]
    Estimator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
