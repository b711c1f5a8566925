use thiserror::Error;

use crate::sim::SimReport;

/// Errors produced by the Hawkes toolkit.
#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("process is not stationary: spectral radius {spectral_radius} >= 1")]
    NonStationary { spectral_radius: f64 },

    #[error("missing event history: intensity at {time} needs events from {needed}, data start at {available}")]
    MissingHistory { time: f64, needed: f64, available: f64 },

    #[error(
        "power iteration did not converge after {iterations} iterations \
         (bounds [{lower}, {upper}])"
    )]
    NoConvergence { iterations: usize, lower: f64, upper: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("event budget of {budget} exceeded after {generated} events")]
    BudgetExceeded {
        budget: usize,
        generated: usize,
        report: Box<SimReport>,
    },

    #[error("unsupported kernel representation: {0}")]
    UnsupportedRepresentation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("chain initialization failed: {0}")]
    Initialization(String),

    #[error("cache audit failed at iteration {iteration}: cached {cached}, recomputed {fresh}")]
    CacheAudit { iteration: usize, cached: f64, fresh: f64 },

    #[error("empty sample set")]
    EmptySample,

    #[error("truth generation failed: {0}")]
    Generation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HawkesError>;
