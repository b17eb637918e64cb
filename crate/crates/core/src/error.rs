use thiserror::Error;

/// Errors raised across the simulation, fitting and transfer-tensor layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("degenerate state: subspace weight {weight:e} below threshold")]
    DegenerateState { weight: f64 },

    #[error("degenerate point at index {index}: subspace weight {weight:e} below threshold")]
    DegeneratePoint { index: usize, weight: f64 },

    #[error("normalization error: first-point population {value:e} below threshold")]
    Normalization { value: f64 },

    #[error("degenerate bath pole: gamma = {gamma} coincides with Matsubara frequency {nu}")]
    DegeneratePole { gamma: f64, nu: f64 },

    #[error("integration failed at t = {t_reached}: {reason}")]
    IntegrationFailure { t_reached: f64, reason: String },

    #[error("ill-conditioned initial-state basis (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("index {index} out of range (valid 1..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("transfer-tensor extension diverged at step {step}: trace {trace:e}")]
    Divergence { step: usize, trace: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("linear fit is rank deficient: all abscissae equal")]
    RankDeficient,

    #[error("linear fit is not invertible (zero slope)")]
    NonInvertible,

    #[error("interpolated delta_q = {0} is out of range")]
    OutOfRange(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
