use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised while building or solving a discretised transmission problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid with {n} points per axis has no interior points (need at least 3)")]
    NoInteriorPoints { n: usize },

    #[error("box widths differ across axes ({widths:?}); one spacing must serve all axes")]
    UnequalWidths { widths: Vec<f64> },

    #[error("offset {offset:?} from point {index} leaves the lattice")]
    OutOfLattice { index: usize, offset: Vec<i32> },

    #[error("stencil requested at non-interior point {index}")]
    StencilOutOfDomain { index: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("degenerate ellipticity: {0}")]
    DegenerateEllipticity(String),

    #[error("barrier certificate fails at point {index}: {detail}")]
    BarrierViolation { index: usize, detail: String },

    #[error("iteration diverged after {iterations} steps (residual {residual:e}, initial {initial:e})")]
    Divergence {
        iterations: usize,
        residual: f64,
        initial: f64,
    },

    #[error("solution leaves the barrier band at point {index}: u = {value}, band = [{lower}, {upper}]")]
    StabilityFailure {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("non-finite value at point {index}")]
    NonFinite { index: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
