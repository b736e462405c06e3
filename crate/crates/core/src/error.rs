use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("rank deficient: requested rank {requested}, numerical rank {available}")]
    RankDeficient { requested: usize, available: usize },

    #[error("dimension {0} is not prime")]
    NotPrime(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("design is not certified as a 2-design (max deviation {deviation:e})")]
    UncertifiedDesign { deviation: f64 },

    #[error("solver diverged at iteration {iteration}: non-finite objective")]
    Divergence { iteration: usize },

    #[error("ground-truth matrix is zero")]
    ZeroMatrix,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
