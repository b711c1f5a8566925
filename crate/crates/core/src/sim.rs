//! Exact simulation of stationary linear Hawkes processes.
//!
//! [`simulate_cluster`] uses the branching representation: immigrants of
//! type `k` arrive as a homogeneous Poisson process of rate `ν_k`, and every
//! event of type `ℓ` at time `s` spawns a Poisson(`ρ_{ℓk}`) number of type-`k`
//! children at `s + X`, `X ~ h_{ℓk} / ρ_{ℓk}`. [`simulate_thinning`] is
//! Ogata's thinning with a dominating rate refreshed after every point.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::kernel::Kernel;
use crate::model::{stationary_mean, NetworkParams};
use crate::rng::Seed;

/// Summary of one simulation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimReport {
    /// Number of events per component on the returned window `[-A, T]`.
    pub counts: Vec<usize>,
    /// `N^k[0, T]`.
    pub observed_counts: Vec<usize>,
    /// `N^k[0, T] / T`.
    pub empirical_rates: Vec<f64>,
    /// Stationary mean intensities `μ_k`.
    pub target_rates: Vec<f64>,
    /// Length of simulated time before `-A` (cluster: `W - A`).
    pub warmup: f64,
    /// Number of generated events per generation (0 = immigrants).
    pub generation_histogram: Vec<usize>,
    /// Mean number of children per parent, by parent type.
    pub offspring_means: Vec<f64>,
    /// Number of parents of each type that were expanded.
    pub parents: Vec<usize>,
    /// Parent links, when requested.
    pub lineage: Option<Vec<LineageRecord>>,
}

/// One generated event and the event that spawned it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineageRecord {
    pub time: f64,
    pub component: usize,
    pub generation: usize,
    pub parent: Option<(f64, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    /// Immigrants start at `-W` with `W = A ⌈log ε / log c⌉`.
    pub truncation_eps: f64,
    /// The run aborts after `budget_factor · Σ μ_k (T + W)` events.
    pub budget_factor: f64,
    pub trace_lineage: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            truncation_eps: 1e-6,
            budget_factor: 10.0,
            trace_lineage: false,
        }
    }
}

/// Extension `W` of the immigrant window before time 0.
pub fn cluster_window(horizon: f64, spectral_radius: f64, eps: f64) -> f64 {
    if spectral_radius <= 0.0 {
        return horizon;
    }
    let generations = (eps.ln() / spectral_radius.ln()).ceil().max(1.0);
    horizon * generations
}

pub fn simulate_cluster(f: &NetworkParams, horizon: f64, seed: impl Into<Seed>) -> Result<(EventData, SimReport)> {
    simulate_cluster_with(f, horizon, seed, &ClusterOptions::default())
}

/// A pending event: time, component, generation and its parent's time and component.
type Pending = (f64, usize, usize, Option<(f64, usize)>);

pub fn simulate_cluster_with(
    f: &NetworkParams,
    horizon: f64,
    seed: impl Into<Seed>,
    options: &ClusterOptions,
) -> Result<(EventData, SimReport)> {
    check_horizon(horizon)?;
    let seed = seed.into();
    let dim = f.dimension();
    let a = f.horizon();
    let rho = f.mass_matrix();
    let radius = rho.spectral_radius()?;
    if radius >= 1.0 {
        return Err(HawkesError::NonStationary {
            spectral_radius: radius,
        });
    }
    let mu = stationary_mean(&f.nus(), &rho)?;
    let window = cluster_window(a, radius, options.truncation_eps);
    let budget = budget(options.budget_factor, &mu, horizon + window);

    // children[ℓ] = (k, kernel, offspring law) for every ℓ ∈ S(k)
    let mut children: Vec<Vec<(usize, &Kernel, Poisson<f64>)>> = vec![Vec::new(); dim];
    for (k, comp) in f.components().iter().enumerate() {
        for (l, kernel) in comp.kernels() {
            let law = Poisson::new(kernel.mass())
                .map_err(|e| HawkesError::InvalidParameter(format!("offspring law: {e}")))?;
            children[*l].push((k, kernel, law));
        }
    }
    let mut rngs: Vec<_> = (0..dim as u64).map(|k| seed.stream(k)).collect();

    let mut queue: VecDeque<Pending> = VecDeque::new();
    for (k, comp) in f.components().iter().enumerate() {
        let rng = &mut rngs[k];
        let mean = comp.nu() * (horizon + window);
        let n = Poisson::new(mean)
            .map_err(|e| HawkesError::InvalidParameter(format!("immigrant law: {e}")))?
            .sample(rng) as usize;
        let mut times: Vec<f64> = (0..n)
            .map(|_| -window + rng.random::<f64>() * (horizon + window))
            .collect();
        times.sort_by(f64::total_cmp);
        queue.extend(times.into_iter().map(|t| (t, k, 0, None)));
    }

    let mut report = SimReport {
        target_rates: mu.clone(),
        warmup: window - a,
        parents: vec![0; dim],
        offspring_means: vec![0.0; dim],
        lineage: options.trace_lineage.then(Vec::new),
        ..SimReport::default()
    };
    let mut offspring_totals = vec![0usize; dim];
    let mut kept: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut generated = 0usize;

    while let Some((t, l, generation, parent)) = queue.pop_front() {
        generated += 1;
        if generated > budget {
            report.counts = kept.iter().map(Vec::len).collect();
            return Err(HawkesError::BudgetExceeded {
                budget,
                generated,
                report: Box::new(report),
            });
        }
        if report.generation_histogram.len() <= generation {
            report.generation_histogram.resize(generation + 1, 0);
        }
        report.generation_histogram[generation] += 1;
        if let Some(lineage) = report.lineage.as_mut() {
            lineage.push(LineageRecord {
                time: t,
                component: l,
                generation,
                parent,
            });
        }
        if t >= -a {
            kept[l].push(t);
        }
        report.parents[l] += 1;
        let rng = &mut rngs[l];
        for (k, kernel, law) in &children[l] {
            let n = law.sample(rng) as usize;
            offspring_totals[l] += n;
            for _ in 0..n {
                let child = t + kernel.sample_lag(rng);
                // children after T cannot have descendants inside the window
                if child <= horizon {
                    queue.push_back((child, *k, generation + 1, Some((t, l))));
                }
            }
        }
    }

    for ((mean, parents), total) in report
        .offspring_means
        .iter_mut()
        .zip(&report.parents)
        .zip(&offspring_totals)
    {
        if *parents > 0 {
            *mean = *total as f64 / *parents as f64;
        }
    }
    finish(kept, -a, horizon, report)
}

/// Ogata thinning on `[-warmup, T]`; the returned window is `[-A, T]`.
pub fn simulate_thinning(
    f: &NetworkParams,
    horizon: f64,
    warmup: f64,
    seed: impl Into<Seed>,
) -> Result<(EventData, SimReport)> {
    check_horizon(horizon)?;
    let seed = seed.into();
    let dim = f.dimension();
    let a = f.horizon();
    if !(warmup >= a) {
        return Err(HawkesError::InvalidParameter(format!(
            "thinning warm-up {warmup} must cover the kernel horizon {a}"
        )));
    }
    let rho = f.mass_matrix();
    let radius = rho.spectral_radius()?;
    if radius >= 1.0 {
        return Err(HawkesError::NonStationary {
            spectral_radius: radius,
        });
    }
    let mu = stationary_mean(&f.nus(), &rho)?;
    let budget = budget(10.0, &mu, horizon + warmup);

    // total sup-norm of the kernels driven by each source
    let mut sup_out = vec![0.0; dim];
    for comp in f.components() {
        for (l, kernel) in comp.kernels() {
            sup_out[*l] += kernel.sup_norm();
        }
    }
    let nu_total: f64 = f.nus().iter().sum();
    let mut rng = seed.stream(dim as u64);
    let mut history: Vec<VecDeque<f64>> = vec![VecDeque::new(); dim];
    let mut kept: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut rates = vec![0.0; dim];
    let mut generated = 0usize;
    let mut t = -warmup;

    loop {
        for h in history.iter_mut() {
            while h.front().is_some_and(|s| *s < t - a) {
                h.pop_front();
            }
        }
        let bound = nu_total
            + history
                .iter()
                .zip(&sup_out)
                .map(|(h, s)| h.len() as f64 * s)
                .sum::<f64>();
        if !bound.is_finite() || bound <= 0.0 {
            return Err(HawkesError::BudgetExceeded {
                budget,
                generated,
                report: Box::new(SimReport {
                    counts: kept.iter().map(Vec::len).collect(),
                    target_rates: mu,
                    ..SimReport::default()
                }),
            });
        }
        let step = Exp::new(bound)
            .map_err(|e| HawkesError::InvalidParameter(format!("dominating rate: {e}")))?
            .sample(&mut rng);
        t += step;
        if t > horizon {
            break;
        }
        let mut total = 0.0;
        for (k, comp) in f.components().iter().enumerate() {
            let mut r = comp.nu();
            for (l, kernel) in comp.kernels() {
                r += history[*l]
                    .iter()
                    .rev()
                    .take_while(|s| **s >= t - a)
                    .filter(|s| **s < t)
                    .map(|s| kernel.eval(t - s))
                    .sum::<f64>();
            }
            rates[k] = r;
            total += r;
        }
        if rng.random::<f64>() * bound > total {
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut chosen = dim - 1;
        for (k, r) in rates.iter().enumerate() {
            if u < *r {
                chosen = k;
                break;
            }
            u -= r;
        }
        generated += 1;
        if generated > budget {
            return Err(HawkesError::BudgetExceeded {
                budget,
                generated,
                report: Box::new(SimReport {
                    counts: kept.iter().map(Vec::len).collect(),
                    target_rates: mu,
                    ..SimReport::default()
                }),
            });
        }
        history[chosen].push_back(t);
        if t >= -a {
            kept[chosen].push(t);
        }
    }

    let report = SimReport {
        target_rates: mu,
        warmup: warmup - a,
        ..SimReport::default()
    };
    finish(kept, -a, horizon, report)
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HawkesError::InvalidParameter(format!(
            "simulation horizon must be positive, got {horizon}"
        )));
    }
    Ok(())
}

fn budget(factor: f64, mu: &[f64], length: f64) -> usize {
    let expected: f64 = mu.iter().sum::<f64>() * length;
    (factor * expected).ceil().max(1000.0) as usize
}

fn finish(mut kept: Vec<Vec<f64>>, start: f64, end: f64, mut report: SimReport) -> Result<(EventData, SimReport)> {
    for times in kept.iter_mut() {
        times.sort_by(f64::total_cmp);
        // floating-point ties: nudge the later point up by one ulp
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                times[i] = times[i - 1].next_up();
            }
        }
        while times.last().is_some_and(|t| *t > end) {
            times.pop();
        }
    }
    let events = EventData::new(start, end, kept)?;
    report.counts = events.all_times().iter().map(Vec::len).collect();
    report.observed_counts = (0..events.dimension()).map(|k| events.count(k, 0.0, end)).collect();
    report.empirical_rates = report.observed_counts.iter().map(|n| *n as f64 / end).collect();
    Ok((events, report))
}

/// Deviation of empirical rates from `μ` on one time window.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WindowDeviation {
    pub start: f64,
    pub end: f64,
    /// `max_k |N^k / (end - start) - μ_k|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    pub mu: Vec<f64>,
    pub full: WindowDeviation,
    pub splits: Vec<WindowDeviation>,
    pub tolerance: f64,
    pub flagged: bool,
}

/// Compares `N^k[0,T]/T` (and the same ratio on `splits` equal sub-windows)
/// with the stationary mean of `f`.
pub fn ergodicity_check(
    events: &EventData,
    f: &NetworkParams,
    horizon: f64,
    splits: usize,
    tolerance: f64,
) -> Result<ErgodicityReport> {
    check_horizon(horizon)?;
    let mu = stationary_mean(&f.nus(), &f.mass_matrix())?;
    let deviation = |a: f64, b: f64, closed: bool| {
        (0..f.dimension())
            .map(|k| {
                let n = if closed {
                    events.count(k, a, b)
                } else {
                    events.in_half_open(k, a, b).len()
                };
                (n as f64 / (b - a) - mu[k]).abs()
            })
            .fold(0.0, f64::max)
    };
    let full = WindowDeviation {
        start: 0.0,
        end: horizon,
        deviation: deviation(0.0, horizon, true),
    };
    let width = horizon / splits.max(1) as f64;
    let split_devs: Vec<WindowDeviation> = (0..splits)
        .map(|i| {
            let a = i as f64 * width;
            let b = if i + 1 == splits { horizon } else { a + width };
            WindowDeviation {
                start: a,
                end: b,
                deviation: deviation(a, b, i + 1 == splits),
            }
        })
        .collect();
    let flagged = full.deviation > tolerance || split_devs.iter().any(|d| d.deviation > tolerance);
    Ok(ErgodicityReport {
        mu,
        full,
        splits: split_devs,
        tolerance,
        flagged,
    })
}
