use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The event loop made no transaction for the configured step budget.
    /// Either the ensemble is too sparse to cross or the config is degenerate.
    #[error("starved: no transaction in {steps} steps (t = {t:.6})")]
    Starved { steps: u64, t: f64 },

    #[error("unstable step: dt = {dt:e} exceeds the explicit-scheme bound {bound:e}")]
    Unstable { dt: f64, bound: f64 },

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("comparison: {0}")]
    Comparison(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
