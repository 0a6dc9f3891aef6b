use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {index} (grid has {len} points)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid index pair: {start} > {end}")]
    InvalidRange { start: usize, end: usize },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid Hoelder exponent {0}: must lie in (1/3, 1/2]")]
    InvalidExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("non-finite value at grid index {index}")]
    NonFinite { index: usize },

    #[error("explosion at grid index {index}: |state| = {magnitude:e}")]
    Explosion { index: usize, magnitude: f64 },

    #[error("controlled paths do not match at the junction")]
    JunctionMismatch,

    #[error("Picard iteration did not converge on window starting at {window_start} after {iterations} iterations (last gap {gap:e})")]
    NoConvergence {
        window_start: usize,
        iterations: usize,
        gap: f64,
    },

    #[error("missing metadata: {0}")]
    MissingMetadata(&'static str),

    #[error("micro-step policy violated: step {step:e} exceeds {limit:e}")]
    PolicyViolation { step: f64, limit: f64 },

    #[error("Monte Carlo budget too small: standard error {stderr:e} above tolerance {tolerance:e}")]
    BudgetTooSmall { stderr: f64, tolerance: f64 },

    #[error("circulant embedding has a negative eigenvalue ({0:e}) and the dense fallback is too large")]
    EmbeddingFailed(f64),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("noise streams collide: both use stream id {0}")]
    StreamCollision(u64),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("{x} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfTableRange { x: f64, lo: f64, hi: f64 },

    #[error("unknown model: {0}")]
    UnknownModel(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("run failed for seed index {seed}, epsilon {epsilon}: {source}")]
    RunFailed {
        seed: u64,
        epsilon: f64,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (blow-up, non-finite state,
    /// non-convergence) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        if let Error::RunFailed { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Explosion { .. }
                | Error::NoConvergence { .. }
                | Error::EmbeddingFailed(_)
                | Error::NotPositiveDefinite
        )
    }
}
