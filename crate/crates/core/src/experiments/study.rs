//! Rate studies: simulate, fit and score every `(T, replicate, k)`, then
//! summarize the error decay over the horizon grid.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::truth::TruthReport;
use super::{replicate_seed, study_truth};
use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::losses::{loss_report, LossReport};
use crate::mcmc::{median, run_chain, summarize, PosteriorSample};
use crate::model::{ComponentParams, NetworkParams};
use crate::priors::Priors;
use crate::rng::Seed;
use crate::sim::simulate_cluster;
use crate::two_step::{refit_conditional, select_graph};

const SIM_TAG: u64 = 0x73_696d;
const FIT_TAG: u64 = 0x66_6974;
const REFIT_TAG: u64 = 0x7265_6669_74;
const STUDY_TAG: u64 = 0x7374_7564_79;

/// One `(T, replicate, k)` line of the long-format table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub horizon: f64,
    pub replicate: usize,
    pub component: usize,
    pub d1t_median: f64,
    pub l1_median: f64,
    pub l1_nu: f64,
    pub l1_false_mass: f64,
    pub l1_active: f64,
    pub exact_recovery: bool,
}

/// Full posterior against conditional refit for one `(T, replicate, k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStepRow {
    pub horizon: f64,
    pub replicate: usize,
    pub component: usize,
    pub threshold: f64,
    pub selected: Vec<usize>,
    pub truth: Vec<usize>,
    pub exact_recovery: bool,
    pub full_d1t_median: f64,
    pub full_l1_median: f64,
    pub refit_d1t_median: f64,
    pub refit_l1_median: f64,
}

/// A replicate (or one of its components) that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRow {
    pub horizon: f64,
    pub replicate: usize,
    pub component: Option<usize>,
    pub error: String,
}

/// Medians over `(replicate, k)` at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub horizon: f64,
    pub rows: usize,
    pub d1t_median: f64,
    pub l1_median: f64,
    pub exact_recovery_rate: f64,
}

#[derive(Debug, Clone)]
pub struct RateStudy {
    pub truth: TruthReport,
    pub rows: Vec<RateRow>,
    pub two_step: Vec<TwoStepRow>,
    pub failures: Vec<FailureRow>,
    pub summary: Vec<SummaryRow>,
    /// Least-squares slope of `log(median d1T)` against `log T`.
    pub d1t_slope: Option<f64>,
    pub l1_slope: Option<f64>,
}

/// Up to `max` draws, evenly spaced over the sample.
pub fn spaced_draws(draws: &[ComponentParams], max: usize) -> Vec<&ComponentParams> {
    let n = draws.len();
    if n <= max {
        return draws.iter().collect();
    }
    (0..max).map(|i| &draws[i * n / max]).collect()
}

/// Medians of `d1T` and of each `L1` part over the (subsampled) draws.
pub fn median_losses(
    sample: &PosteriorSample,
    truth: &ComponentParams,
    events: &EventData,
    max_draws: usize,
) -> Result<LossReport> {
    let draws = spaced_draws(&sample.draws, max_draws);
    if draws.is_empty() {
        return Err(HawkesError::EmptySample);
    }
    let reports = draws
        .iter()
        .map(|d| loss_report(d, truth, events, sample.horizon))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&LossReport) -> f64| median(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(LossReport {
        d1t: pick(|r| r.d1t),
        l1: crate::losses::L1Report {
            total: pick(|r| r.l1.total),
            nu: pick(|r| r.l1.nu),
            false_mass: pick(|r| r.l1.false_mass),
            active: pick(|r| r.l1.active),
        },
    })
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Log-log slope of `values` against `horizons`; `None` if any value is not
/// positive.
pub fn log_log_slope(horizons: &[f64], values: &[f64]) -> Option<f64> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let x: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    ols_slope(&x, &y)
}

/// Bootstrap standard error of the sample median.
pub fn bootstrap_median_se(values: &[f64], resamples: usize, seed: Seed) -> f64 {
    let n = values.len();
    if n == 0 || resamples < 2 {
        return f64::NAN;
    }
    let mut rng = seed.stream(0);
    let mut buf = vec![0.0; n];
    let meds: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            median(&buf)
        })
        .collect();
    let m = meds.iter().sum::<f64>() / resamples as f64;
    (meds.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

struct ComponentOutcome {
    row: RateRow,
    two_step: Option<TwoStepRow>,
}

#[allow(clippy::too_many_arguments)]
fn fit_component(
    k: usize,
    truth: &NetworkParams,
    events: &EventData,
    horizon: f64,
    replicate: usize,
    priors: &Priors,
    config: &ExperimentConfig,
    seed: Seed,
    refit: bool,
) -> Result<ComponentOutcome> {
    let truth_k = truth.component(k);
    let sample = run_chain(k, events, horizon, priors, &config.mcmc, seed.child(FIT_TAG))?;
    let full = median_losses(&sample, truth_k, events, config.study.loss_draws)?;
    let summary = summarize(&sample)?;
    let threshold = config.threshold.threshold(horizon, truth.dimension())?;
    let selected = select_graph(&summary.rho_hat, threshold);
    let truth_set = truth_k.active_set();
    let exact = selected == truth_set;
    let row = RateRow {
        horizon,
        replicate,
        component: k,
        d1t_median: full.d1t,
        l1_median: full.l1.total,
        l1_nu: full.l1.nu,
        l1_false_mass: full.l1.false_mass,
        l1_active: full.l1.active,
        exact_recovery: exact,
    };
    let two_step = if refit {
        let refit = refit_conditional(
            k,
            events,
            horizon,
            &selected,
            priors,
            &config.mcmc,
            seed.child(REFIT_TAG),
            Some(&sample),
        )?;
        let refit_losses = median_losses(&refit, truth_k, events, config.study.loss_draws)?;
        Some(TwoStepRow {
            horizon,
            replicate,
            component: k,
            threshold,
            selected,
            truth: truth_set,
            exact_recovery: exact,
            full_d1t_median: full.d1t,
            full_l1_median: full.l1.total,
            refit_d1t_median: refit_losses.d1t,
            refit_l1_median: refit_losses.l1.total,
        })
    } else {
        None
    };
    Ok(ComponentOutcome { row, two_step })
}

type JobResult = (Vec<ComponentOutcome>, Vec<FailureRow>);

fn run_job(
    truth: &NetworkParams,
    priors: &Priors,
    config: &ExperimentConfig,
    t_index: usize,
    replicate: usize,
) -> JobResult {
    let horizon = config.horizons[t_index];
    let seed = replicate_seed(
        Seed::new(config.seed, 0).child(STUDY_TAG).child(t_index as u64),
        replicate,
    );
    let events = match simulate_cluster(truth, horizon, seed.child(SIM_TAG)) {
        Ok((events, _)) => events,
        Err(e) => {
            let failure = FailureRow {
                horizon,
                replicate,
                component: None,
                error: e.to_string(),
            };
            return (Vec::new(), vec![failure]);
        }
    };
    let refit = config.study.refit_horizons.contains(&horizon);
    let results: Vec<Result<ComponentOutcome>> = (0..truth.dimension())
        .into_par_iter()
        .map(|k| fit_component(k, truth, &events, horizon, replicate, priors, config, seed, refit))
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(FailureRow {
                horizon,
                replicate,
                component: Some(k),
                error: e.to_string(),
            }),
        }
    }
    (ok, failures)
}

/// Runs the study on a pool of `config.workers` threads (all cores if 0).
/// Each `(T, replicate)` uses its own random streams, and results are
/// collected in grid order, so the output does not depend on scheduling.
pub fn rate_study(config: &ExperimentConfig) -> Result<RateStudy> {
    config.validate()?;
    let truth = study_truth(config)?;
    let prior = config
        .prior
        .as_ref()
        .ok_or_else(|| HawkesError::Config("a rate study needs a [prior] block".into()))?;
    let priors = Priors::new(prior.resolve(truth.params.horizon()), truth.params.dimension())?;
    let jobs: Vec<(usize, usize)> = (0..config.horizons.len())
        .flat_map(|t| (0..config.replicates).map(move |r| (t, r)))
        .collect();
    let run = || -> Vec<JobResult> {
        jobs.par_iter()
            .map(|&(t, r)| run_job(&truth.params, &priors, config, t, r))
            .collect()
    };
    let results = super::with_workers(config.workers, run)?;

    let mut rows = Vec::new();
    let mut two_step = Vec::new();
    let mut failures = Vec::new();
    for (ok, failed) in results {
        for o in ok {
            rows.push(o.row);
            two_step.extend(o.two_step);
        }
        failures.extend(failed);
    }
    let summary: Vec<SummaryRow> = config
        .horizons
        .iter()
        .map(|&h| {
            let at: Vec<&RateRow> = rows.iter().filter(|r| r.horizon == h).collect();
            SummaryRow {
                horizon: h,
                rows: at.len(),
                d1t_median: median(&at.iter().map(|r| r.d1t_median).collect::<Vec<_>>()),
                l1_median: median(&at.iter().map(|r| r.l1_median).collect::<Vec<_>>()),
                exact_recovery_rate: if at.is_empty() {
                    f64::NAN
                } else {
                    at.iter().filter(|r| r.exact_recovery).count() as f64 / at.len() as f64
                },
            }
        })
        .collect();
    let complete: Vec<&SummaryRow> = summary.iter().filter(|s| s.rows > 0).collect();
    let hs: Vec<f64> = complete.iter().map(|s| s.horizon).collect();
    let d1t_slope = log_log_slope(&hs, &complete.iter().map(|s| s.d1t_median).collect::<Vec<_>>());
    let l1_slope = log_log_slope(&hs, &complete.iter().map(|s| s.l1_median).collect::<Vec<_>>());
    Ok(RateStudy {
        truth,
        rows,
        two_step,
        failures,
        summary,
        d1t_slope,
        l1_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn slope_of_power_law() {
        let t = [250.0, 500.0, 1000.0, 2000.0];
        let v: Vec<f64> = t.iter().map(|x: &f64| 3.0 * x.powf(-1.0 / 3.0)).collect();
        assert!((log_log_slope(&t, &v).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        assert!(log_log_slope(&t, &[1.0, 0.0, 1.0, 1.0]).is_none());
        assert!(ols_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn doubling_replicates_shrinks_median_se_by_root_two() {
        let mut rng = Seed::new(9, 0).stream(1);
        let law = Exp::new(1.0).unwrap();
        let big: Vec<f64> = (0..800).map(|_| law.sample(&mut rng)).collect();
        let se_n = bootstrap_median_se(&big[..400], 2000, Seed::new(1, 0));
        let se_2n = bootstrap_median_se(&big, 2000, Seed::new(2, 0));
        let ratio = se_n / se_2n;
        let expected = 2f64.sqrt();
        assert!(ratio > expected / 1.5 && ratio < expected * 1.5, "ratio {ratio}");
    }

    #[test]
    fn spacing_keeps_at_most_max() {
        let d = vec![ComponentParams::background(1.0).unwrap(); 10];
        assert_eq!(spaced_draws(&d, 4).len(), 4);
        assert_eq!(spaced_draws(&d, 40).len(), 10);
    }
}
