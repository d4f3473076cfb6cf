use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension n = {0} is out of range: need n >= 2")]
    Dimension(u32),
    #[error("singular exponent alpha = {0} is out of range: need alpha > -1")]
    Alpha(f64),
    #[error("grid too coarse: {nodes} nodes over {decades:.2} decades (need at least {min_per_decade} per decade and m >= 16)")]
    GridTooCoarse {
        nodes: usize,
        decades: f64,
        min_per_decade: usize,
    },
    #[error("invalid grid bounds: need 0 < r_min < r_max, got r_min = {r_min}, r_max = {r_max}")]
    GridBounds { r_min: f64, r_max: f64 },
    #[error("quadrature did not reach {tol:e} absolute accuracy (estimate {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },
    #[error("kernel entry ({i}, {j}) failed: {source}")]
    KernelEntry {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("continuation stage {stage} (eps = {eps}, delta = {delta}) failed: {reason}")]
    Stage {
        stage: usize,
        eps: f64,
        delta: f64,
        reason: String,
    },
    #[error("kernel cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        name,
        reason: reason.into(),
    }
}
