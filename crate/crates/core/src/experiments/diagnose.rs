//! Monte Carlo checks of the moment bounds of a certified truth and of the
//! `T^{-1/2}` scaling of ergodic averages.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{DiagnoseOptions, ExperimentConfig};
use super::truth::{canonical_truth, TruthReport};
use super::{replicate_seed, study_truth};
use crate::error::Result;
use crate::events::EventData;
use crate::likelihood::build_piecewise_intensity;
use crate::mcmc::median;
use crate::model::{intensity_at, stationary_mean, ComponentParams, NetworkParams};
use crate::rng::Seed;
use crate::sim::{ergodicity_check, simulate_cluster};

/// One-sided 1% normal quantile used for the bound checks.
pub const ONE_SIDED_Z: f64 = 2.326;
/// Two-sided tolerance, in standard errors, for empirical rates against `μ`.
pub const RATE_Z: f64 = 4.0;
const DIAGNOSE_TAG: u64 = 0x6469_6167;
const SQUARE_STEPS_PER_SUPPORT: f64 = 256.0;

/// One line of the diagnostics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub truth: String,
    pub check: String,
    pub component: Option<usize>,
    pub horizon: f64,
    pub statistic: f64,
    pub std_error: Option<f64>,
    pub bound: f64,
    pub pass: bool,
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `(1/T) ∫_0^T λ_t² dt`: exact for histogram kernels, midpoint rule with
/// step `A/256` otherwise.
pub fn path_mean_square(
    f_k: &ComponentParams,
    k: usize,
    events: &EventData,
    horizon: f64,
    kernel_horizon: f64,
) -> Result<f64> {
    if f_k.all_histogram() {
        return Ok(build_piecewise_intensity(f_k, k, events, horizon)?.integral_of_square() / horizon);
    }
    let steps = (horizon / kernel_horizon * SQUARE_STEPS_PER_SUPPORT).ceil() as usize;
    let h = horizon / steps as f64;
    let mut sum = 0.0;
    for i in 0..steps {
        let lam = intensity_at(f_k, events, (i as f64 + 0.5) * h)?;
        sum += lam * lam;
    }
    Ok(sum * h / horizon)
}

struct PathMoments {
    rate: Vec<f64>,
    square: Vec<f64>,
    window_count: Vec<f64>,
}

fn path_moments(f: &NetworkParams, options: &DiagnoseOptions, seed: Seed) -> Result<PathMoments> {
    let h = options.horizon;
    let (events, _) = simulate_cluster(f, h, seed)?;
    let dim = f.dimension();
    let mut out = PathMoments {
        rate: Vec::with_capacity(dim),
        square: Vec::with_capacity(dim),
        window_count: Vec::with_capacity(dim),
    };
    for k in 0..dim {
        out.rate.push(events.count(k, 0.0, h) as f64 / h);
        out.square
            .push(path_mean_square(f.component(k), k, &events, h, f.horizon())?);
        out.window_count
            .push(events.in_half_open(k, 0.0, options.mgf_window).len() as f64);
    }
    Ok(out)
}

/// Empirical `E[exp(t N^k[0, B))]` with its standard error, per component.
pub fn empirical_mgf(f: &NetworkParams, t: f64, window: f64, replicates: usize, seed: Seed) -> Result<Vec<(f64, f64)>> {
    let counts = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let (events, _) = simulate_cluster(f, window, replicate_seed(seed, r))?;
            Ok((0..f.dimension())
                .map(|k| events.in_half_open(k, 0.0, window).len() as f64)
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..f.dimension())
        .map(|k| {
            let xs: Vec<f64> = counts.iter().map(|c| (t * c[k]).exp()).collect();
            mean_se(&xs)
        })
        .collect())
}

/// Expected-intensity, mean-square and exponential-moment checks.
pub fn moment_checks(
    label: &str,
    truth: &TruthReport,
    options: &DiagnoseOptions,
    seed: Seed,
) -> Result<Vec<DiagnosticRow>> {
    if options.replicates == 0 {
        return Ok(Vec::new());
    }
    let f = &truth.params;
    let c = &truth.constants;
    let mu = stationary_mean(&f.nus(), &f.mass_matrix())?;
    let paths = (0..options.replicates)
        .into_par_iter()
        .map(|r| path_moments(f, options, replicate_seed(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let t = 0.5 * c.t_max;
    let b = options.mgf_window;
    let mut rows = Vec::new();
    for (k, mu_k) in mu.iter().enumerate() {
        let row = |check: &str, xs: Vec<f64>, bound: f64, two_sided: bool| {
            let (m, se) = mean_se(&xs);
            let pass = if two_sided {
                (m - bound).abs() <= RATE_Z * se
            } else {
                m - ONE_SIDED_Z * se <= bound
            };
            DiagnosticRow {
                truth: label.to_string(),
                check: check.to_string(),
                component: Some(k),
                horizon: if check == "mgf" { b } else { options.horizon },
                statistic: m,
                std_error: Some(se),
                bound,
                pass,
            }
        };
        rows.push(row(
            "rate_vs_mu",
            paths.iter().map(|p| p.rate[k]).collect(),
            *mu_k,
            true,
        ));
        rows.push(row(
            "mean_intensity",
            paths.iter().map(|p| p.rate[k]).collect(),
            c.c0,
            false,
        ));
        rows.push(row(
            "mean_square_intensity",
            paths.iter().map(|p| p.square[k]).collect(),
            c.c0_bar,
            false,
        ));
        rows.push(row(
            "mgf",
            paths.iter().map(|p| (t * p.window_count[k]).exp()).collect(),
            (t * c.gamma * b).exp(),
            false,
        ));
    }
    Ok(rows)
}

/// Median over replicates of `max_k |N^k[0,T]/T - μ_k|` per horizon, and
/// the ratio between consecutive horizons, which should be close to
/// `√(T₂/T₁)`; it passes inside `[0.6, 1.75] · √(T₂/T₁)`.
pub fn ergodic_checks(
    label: &str,
    f: &NetworkParams,
    options: &DiagnoseOptions,
    seed: Seed,
) -> Result<Vec<DiagnosticRow>> {
    let mut medians = Vec::with_capacity(options.ergodic_horizons.len());
    let mut rows = Vec::new();
    for (i, &h) in options.ergodic_horizons.iter().enumerate() {
        let base = seed.child(i as u64);
        let devs = (0..options.ergodic_replicates)
            .into_par_iter()
            .map(|r| {
                let (events, _) = simulate_cluster(f, h, replicate_seed(base, r))?;
                Ok(ergodicity_check(&events, f, h, 0, f64::INFINITY)?.full.deviation)
            })
            .collect::<Result<Vec<f64>>>()?;
        let m = median(&devs);
        medians.push(m);
        rows.push(DiagnosticRow {
            truth: label.to_string(),
            check: "ergodic_median".into(),
            component: None,
            horizon: h,
            statistic: m,
            std_error: None,
            bound: f64::INFINITY,
            pass: m.is_finite(),
        });
    }
    for (i, w) in options.ergodic_horizons.windows(2).enumerate() {
        let ratio = medians[i] / medians[i + 1];
        let expected = (w[1] / w[0]).sqrt();
        rows.push(DiagnosticRow {
            truth: label.to_string(),
            check: "ergodic_ratio".into(),
            component: None,
            horizon: w[1],
            statistic: ratio,
            std_error: None,
            bound: expected,
            pass: ratio >= 0.6 * expected && ratio <= 1.75 * expected,
        });
    }
    Ok(rows)
}

/// Runs every check on the config truth (if any) and on the listed
/// canonical networks. No truths means an empty table.
pub fn diagnose(config: &ExperimentConfig) -> Result<Vec<DiagnosticRow>> {
    let mut truths = Vec::new();
    if config.truth.is_some() {
        truths.push(("config".to_string(), study_truth(config)?));
    }
    for &k in &config.diagnose.canonical {
        truths.push((format!("canonical-{k}"), canonical_truth(k)?));
    }
    let root = Seed::new(config.seed, 0).child(DIAGNOSE_TAG);
    let mut rows = Vec::new();
    for (i, (label, truth)) in truths.iter().enumerate() {
        let seed = root.child(i as u64);
        rows.extend(moment_checks(label, truth, &config.diagnose, seed.child(0))?);
        rows.extend(ergodic_checks(label, &truth.params, &config.diagnose, seed.child(1))?);
    }
    Ok(rows)
}
