use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("derivative magnitude {deriv:e} at y = {y} is below the singularity threshold")]
    SingularDerivative { y: f64, deriv: f64 },

    #[error("orbit escaped the domain at step {step}: value {value}")]
    NumericalEscape { step: usize, value: f64 },

    #[error("operator construction failed: {0}")]
    Construction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    Convergence { iterations: usize, last_change: f64 },

    #[error("series truncation needs {needed} terms (cap {cap}); achievable tolerance {achievable:e}")]
    Truncation {
        needed: f64,
        cap: usize,
        achievable: f64,
    },

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ensemble run failed: {0}")]
    Run(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or failed analyses).
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Truncation { .. })
    }
}
