use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} is not on the integrator grid (step {dt})")]
    NonGridTime { t: f64, dt: f64 },

    #[error("trajectory diverged at t = {t}: |x| exceeded {bound:e}")]
    Diverged { t: f64, bound: f64 },

    #[error("system has no trapping region")]
    NoRegion,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate pair: points closer than {0:e}")]
    DegeneratePair(f64),

    #[error("all weights degenerate: log-weight spread {spread:.1}, effective sample size {ess:.3}")]
    AllWeightsDegenerate { spread: f64, ess: f64 },

    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
