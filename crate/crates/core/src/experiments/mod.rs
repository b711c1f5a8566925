//! Configuration-driven studies: truth generation, rate studies, the
//! diagnostic battery, and their CSV outputs.

pub mod config;
pub mod diagnose;
pub mod output;
pub mod study;
pub mod truth;

pub use config::{
    DiagnoseOptions, ExperimentConfig, FitConfig, GeneratorSpec, PriorBlock, ShapeSpec, StudyOptions, TruthSpec,
};
pub use diagnose::{diagnose, DiagnosticRow};
pub use study::{rate_study, FailureRow, RateRow, RateStudy, SummaryRow, TwoStepRow};
pub use truth::{canonical_truth, certify, generate_truth, resolve_truth, TruthReport};

use crate::error::{HawkesError, Result};
use crate::rng::Seed;

const TRUTH_TAG: u64 = 0x7472_7574_68;

/// Seed of replicate `r` under `base`.
pub(crate) fn replicate_seed(base: Seed, r: usize) -> Seed {
    Seed::new(base.master, r as u64)
}

/// The truth of a study, drawn from the master seed when generated.
pub fn study_truth(config: &ExperimentConfig) -> Result<TruthReport> {
    let spec = config
        .truth
        .as_ref()
        .ok_or_else(|| HawkesError::Config("the study needs a [truth] block".into()))?;
    resolve_truth(spec, Seed::new(config.seed, 0).child(TRUTH_TAG))
}

/// Runs `f` on a pool of `workers` threads, or on the global pool if 0.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HawkesError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}
