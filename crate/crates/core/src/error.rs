use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// The r-th singular value of `X + Ξ` fell below the chart threshold.
    #[error("retraction left the fixed-rank chart: sigma_r = {sigma_r:e}")]
    RankDrop { sigma_r: f64 },

    #[error("ill-conditioned fixed-rank point: smallest singular value {sigma_min:e}")]
    IllConditioned { sigma_min: f64 },

    #[error("tangent vectors live at different base points")]
    BaseMismatch,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("point is not approximately stationary/complementary (residual {residual:e})")]
    NotStationary { residual: f64 },

    #[error("tangent dimension {dim} too large for dense assembly (limit {limit})")]
    TooLarge { dim: usize, limit: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("inner solver failed at outer iteration {outer}: {source}")]
    Inner {
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
