use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("bias I = {0} is overcritical, no static junction phase exists")]
    OvercriticalBias(f64),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("eigensolver did not converge: {converged} of {requested} pairs after {iterations} Lanczos steps (worst residual {worst_residual:.3e})")]
    NoConvergence {
        requested: usize,
        converged: usize,
        iterations: usize,
        worst_residual: f64,
    },
    #[error("singular matrix at pivot {0}")]
    Singular(usize),
    #[error("need two bound states for a transition, found {0}")]
    NoTransition(usize),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("norm grew by {growth:.3e} at t = {time_ns:.4} ns, reduce the time step")]
    StepSize { growth: f64, time_ns: f64 },
    #[error("interface mismatch: {0}")]
    Interface(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
