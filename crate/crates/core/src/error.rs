use thiserror::Error;

/// Errors raised by model construction, the solvers and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expression error in `{source_text}`: {message}")]
    Expression { source_text: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("point is {distance:e} away from the region boundary (tolerance {tolerance:e})")]
    NotOnBoundary { distance: f64, tolerance: f64 },

    #[error("model consistency fault: {0}")]
    ModelFault(String),

    #[error("empty candidate set: {0}")]
    EmptyCandidates(&'static str),

    #[error("model failed validation: {0}")]
    ValidationFailed(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("within-slice sub-iteration did not settle at t = {time} (worst node {node}, change {change:e})")]
    SubIterationLimit { time: f64, node: usize, change: f64 },

    #[error("terminal data cannot be constructed: {0}")]
    TerminalDataRefused(String),

    #[error("time step {dt} exceeds the locality bound {bound}")]
    TimeStepTooLarge { dt: f64, bound: f64 },

    #[error("more than {0} jump events; possible Zeno behaviour")]
    TooManyJumps(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
