use thiserror::Error;

/// Errors produced by the solver engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("point lies on the interface (phi = {phi:e}); region is ambiguous")]
    InterfacePoint { phi: f64 },

    #[error("point is off the interface by {phi:e} (tolerance {tol:e})")]
    OffInterface { phi: f64, tol: f64 },

    #[error("derivative jet is missing the {0} block")]
    MissingJetBlock(&'static str),

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("time {t} outside [0, {t_end}]")]
    TimeOutOfRange { t: f64, t_end: f64 },

    #[error("non-finite state at RK4 step {step}")]
    NonFiniteState { step: usize },

    #[error("factorization failed after {attempts} damping escalations")]
    Factorization { attempts: usize },

    #[error("training diverged at iteration {iter}: loss = {loss}")]
    Diverged { iter: usize, loss: f64 },

    #[error("single-step interval ending at t = {t} already violates the Jacobian threshold (min det = {min_det})")]
    GridTooCoarse { t: f64, min_det: f64 },

    #[error("empty point set")]
    EmptySet,

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
