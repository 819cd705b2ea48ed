use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {x} lies outside the grid [{left}, {right}]")]
    DomainCoverage { x: f64, left: f64, right: f64 },

    #[error("configuration is not admissible: gap {gap} between ranks {index} and {} is below {required}", index + 1)]
    Admissibility { index: usize, gap: f64, required: f64 },

    #[error("density ceiling violated near mass index {index}: slope {slope} does not exceed alpha = {alpha}")]
    DensityCeiling { index: usize, slope: f64, alpha: f64 },

    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("could not restore admissibility at step {step} after {sweeps} sweeps; decrease dt")]
    Projection { step: usize, sweeps: usize },

    #[error("explicit step is unstable at step {step}: dt = {dt}, use dt <= {suggested_dt}")]
    Stability { step: usize, dt: f64, suggested_dt: f64 },

    #[error("negative density {value} in cell {index} at step {step}")]
    Positivity { step: usize, index: usize, value: f64 },

    #[error("density at the truncation walls reached {value:e}, above the allowed {limit:e}; widen the domain")]
    BoundaryMass { value: f64, limit: f64 },

    #[error("measures live on different grids")]
    GridMismatch,

    #[error("density has empty support")]
    EmptySupport,

    #[error("support of snapshot {snapshot} differs from the first snapshot")]
    SupportMismatch { snapshot: usize },

    #[error("fixed-point iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("potential is not coercive; {0} needs a confining on-site potential")]
    NotCoercive(&'static str),

    #[error("time index {index} is not interior to a path of {len} snapshots")]
    BoundaryIndex { index: usize, len: usize },

    #[error("free energy is infinite at snapshot {snapshot}")]
    InfiniteFreeEnergy { snapshot: usize },

    #[error("path has {got} snapshots, at least {need} are required")]
    TooFewSnapshots { got: usize, need: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
