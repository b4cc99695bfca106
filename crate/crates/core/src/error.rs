use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {err:e})")]
    Quadrature { a: f64, b: f64, err: f64 },

    #[error("value {value} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("overflow in direct arithmetic: {0}; use the log-domain evaluation")]
    Overflow(String),

    #[error("ode integration stalled near t = {reached} (step {step:e}); solution blows up")]
    BlowUp { reached: f64, step: f64 },

    #[error("estimator variance too large: standard error {std_err:e} exceeds {tolerance:e}; increase nodes or paths")]
    EstimatorVariance { std_err: f64, tolerance: f64 },

    #[error("picard contraction violated: update ratio {ratio} in window starting at t = {t0}")]
    Contraction { ratio: f64, t0: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("not a convex drift: second difference {value:e} at x = {x}")]
    NonConvex { x: f64, value: f64 },

    #[error("dalang tail undecidable: {0}")]
    UndecidableTail(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("no admissible K on the ladder up to 2^64; worst x = {worst_x}")]
    NoAdmissibleK { worst_x: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
