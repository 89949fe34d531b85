use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid condition: {0}")]
    InvalidCondition(String),

    #[error("model file {path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        message: String,
        line: usize,
        column: usize,
    },

    #[error("generating function overflow for type {type_index} at {point:?}")]
    Overflow { type_index: usize, point: Vec<f64> },

    #[error("tilt parameters violate normalization; residuals {residuals:?}")]
    Normalization { residuals: Vec<f64> },

    #[error("point is off the solution curve; residuals {residuals:?}")]
    OffCurve { residuals: Vec<f64> },

    #[error("power iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize, last_iterate: Vec<f64> },

    #[error("nonpositive coordinate {index} in {point:?}")]
    NonPositive { index: usize, point: Vec<f64> },

    #[error("seed correction failed down to eps = {eps}")]
    SeedFailed { eps: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("enumeration exceeded node budget {budget} after {trees_found} trees")]
    BudgetExceeded { budget: usize, trees_found: usize },

    #[error("rejection sampler gave up after {attempts} attempts (acceptance rate ~ {acceptance_rate:.3e})")]
    AttemptCap { attempts: u64, acceptance_rate: f64 },

    #[error("model is not critical: spectral radius {rho}")]
    NotCritical { rho: f64 },

    #[error("criticalization failed: {0}")]
    Critical(Box<crate::critical::CriticalFailure>),

    #[error("model is reducible")]
    Reducible,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
