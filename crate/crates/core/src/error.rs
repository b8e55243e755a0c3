use thiserror::Error;

/// Errors raised by the simulators, solvers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("spike probability exceeds one at t = {t}: max lambda*dt = {max_prob}; reduce dt")]
    SpikeProbabilityOverflow { t: f64, max_prob: f64 },

    #[error("non-finite particle state at t = {t} (neuron {index})")]
    NonFiniteState { t: f64, index: usize },

    #[error("thinning oracle could not bound the rate locally at t = {t}, v = {v}: {reason}; try a smaller lookahead")]
    RateBoundFailure { t: f64, v: f64, reason: String },

    #[error("linear solver did not converge after {iterations} sweeps (last relative residuals: {history:?})")]
    SolverDiverged { iterations: usize, history: Vec<f64> },

    #[error("transport solve produced a negative density {min} (scheme violation)")]
    NegativeDensity { min: f64 },

    #[error("{outside:.3e} of the initial mass lies outside the domain")]
    MassOutsideDomain { outside: f64 },

    #[error("time step underflow at t = {t}: dt = {dt} < dt_min = {dt_min} (last indicators: {recent:?})")]
    StepUnderflow { t: f64, dt: f64, dt_min: f64, recent: Vec<f64> },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
