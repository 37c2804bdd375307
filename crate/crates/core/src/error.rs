use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dictionary")]
    EmptyDictionary,
    #[error("atom {index} has norm {norm}, expected 1")]
    AtomNotUnit { index: usize, norm: f64 },
    #[error("numeric breakdown at step {0}")]
    NumericBreakdown(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("point {x} outside [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("grid too coarse: monotonicity violated by {0:e}")]
    GridTooCoarse(f64),
    #[error("contraction hypothesis violated: R_G = {0}")]
    ContractionViolated(f64),
    #[error("no convergence after {iterations} iterations (bracket width {width:e})")]
    NoConvergence { iterations: usize, width: f64 },
    #[error("degenerate profile")]
    DegenerateProfile,
    #[error("phi support misses residual at step {0}")]
    PhiSupportMissesResidual(usize),
    #[error("xi imaginary at step {step} (|v| = {norm}) -- increase K")]
    XiImaginary { step: usize, norm: f64 },
    #[error("construction condition failed at step {step}: {detail}")]
    ConditionFailed { step: usize, detail: String },
    #[error("no mollification width passes the profile checks: {0}")]
    ProfileRejected(String),
    #[error("increase N: no epsilon passes")]
    IncreaseN,
    #[error("too few points for fit: {0}")]
    TooFewPoints(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
