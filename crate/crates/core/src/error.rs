use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported cone: {0}")]
    UnsupportedCone(String),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("extension parameters out of range: {0}")]
    InvalidParams(String),
    #[error("series did not converge within {terms} terms")]
    NonConvergence { terms: usize },
    #[error("argument outside the series domain: {0}")]
    SeriesDomain(String),
    #[error("step distribution has nonzero mean")]
    NonzeroMean,
    #[error("step covariance is singular")]
    SingularCovariance,
    #[error("steps lie in a closed half-space; R(h) has no interior minimum")]
    NoInteriorMinimum,
    #[error("invalid step distribution: {0}")]
    InvalidSteps(String),
    #[error("no path exited within the horizon cap")]
    AllPathsCensored,
    #[error("shift too small: margin {margin} does not exceed jump radius {jump}")]
    ShiftTooSmall { margin: f64, jump: f64 },
    #[error("harmonic table is missing the neighbour {0:?}")]
    MissingNeighbor(Vec<i64>),
    #[error("survival probability is zero")]
    ZeroSurvival,
    #[error("harmonic function is not positive at {0:?}")]
    NonpositiveV(Vec<i64>),
    #[error("too few samples: {got} < {needed}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("the walk is periodic; local limit theorems need strong aperiodicity")]
    PeriodicWalk,
    #[error("bridge has zero mass")]
    ZeroBridgeMass,
    #[error("degenerate regression window: {0}")]
    DegenerateWindow(String),
    #[error("chi-square cells too small: {0}")]
    CellsTooSmall(String),
    #[error("point {0:?} is not in the cone")]
    NotInCone(Vec<f64>),
    #[error("resource budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o failure: {0}")]
    IoFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
