//! Two-step estimation: threshold the ranked posterior-mean masses to get
//! `Ŝ(k)`, then refit the posterior with the active set fixed to `Ŝ(k)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::mcmc::{run_chain, run_chain_fixed_graph, summarize, McmcConfig, PosteriorSample, PosteriorSummary};
use crate::priors::Priors;
use crate::rng::Seed;

const REFIT_TAG: u64 = 0x7265_6669_74;

/// Keeps the top-ranked sources until the remaining (tail) mass drops to
/// `u`: with masses sorted decreasingly (ties by smaller index),
/// `ℓ̂ = min{j : Σ_{i ≥ j} ρ̂_(i) ≤ u}` and the first `ℓ̂` ranked sources are
/// returned, in increasing index order.
///
/// Tail sums within a few ulps of `u` count as `≤ u`, so that decimal grids
/// of masses and thresholds behave as their exact values would.
pub fn select_graph(rho_hat: &[f64], u: f64) -> Vec<usize> {
    let n = rho_hat.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| rho_hat[*b].total_cmp(&rho_hat[*a]));
    let mut tails = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tails[j] = tails[j + 1] + rho_hat[order[j]];
    }
    let slack = 4.0 * (n as f64 + 1.0) * f64::EPSILON;
    let cut = (0..=n).find(|j| tails[*j] <= u + slack * tails[*j].max(u)).unwrap_or(n);
    let mut selected = order[..cut].to_vec();
    selected.sort_unstable();
    selected
}

/// `u_T = C_u (1 + log K) (log T) max(ε_T, √(log K / T))`.
pub fn default_threshold(horizon: f64, dimension: usize, eps_hint: f64, c_u: f64) -> Result<f64> {
    if !(horizon > 1.0) || dimension == 0 || !(c_u > 0.0) || !(eps_hint >= 0.0) {
        return Err(HawkesError::InvalidParameter(format!(
            "threshold needs T > 1, K >= 1, C_u > 0, eps >= 0 (got T={horizon}, K={dimension}, C_u={c_u}, eps={eps_hint})"
        )));
    }
    let log_k = (dimension as f64).ln();
    let rate = eps_hint.max((log_k / horizon).sqrt());
    Ok(c_u * (1.0 + log_k) * horizon.ln() * rate)
}

fn default_c_u() -> f64 {
    2.0
}

fn default_eps_exponent() -> f64 {
    1.0 / 3.0
}

/// How `u_T` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    /// [`default_threshold`] with `ε_T = T^{-eps_exponent}`.
    Auto {
        #[serde(default = "default_c_u")]
        c_u: f64,
        #[serde(default = "default_eps_exponent")]
        eps_exponent: f64,
    },
    Fixed {
        value: f64,
    },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::Auto {
            c_u: default_c_u(),
            eps_exponent: default_eps_exponent(),
        }
    }
}

impl ThresholdPolicy {
    pub fn threshold(&self, horizon: f64, dimension: usize) -> Result<f64> {
        match *self {
            Self::Auto { c_u, eps_exponent } => default_threshold(horizon, dimension, horizon.powf(-eps_exponent), c_u),
            Self::Fixed { value } if value > 0.0 => Ok(value),
            Self::Fixed { value } => Err(HawkesError::Config(format!("threshold must be positive, got {value}"))),
        }
    }

    /// Human-readable formula, echoed into output metadata.
    pub fn describe(&self) -> String {
        match self {
            Self::Auto { c_u, eps_exponent } => {
                format!("u_T = {c_u} * (1 + ln K) * ln T * max(T^-{eps_exponent}, sqrt(ln K / T))")
            }
            Self::Fixed { value } => format!("u_T = {value}"),
        }
    }
}

/// Posterior with `S(k)` fixed to `selected`; edge moves are disabled.
/// The chain starts from the last draw of `full` restricted to `selected`,
/// so the refit does not have to find a good bin count on its own.
#[allow(clippy::too_many_arguments)]
pub fn refit_conditional(
    k: usize,
    events: &EventData,
    horizon: f64,
    selected: &[usize],
    priors: &Priors,
    config: &McmcConfig,
    seed: Seed,
    full: Option<&PosteriorSample>,
) -> Result<PosteriorSample> {
    let start = full.and_then(|s| s.draws.last());
    run_chain_fixed_graph(k, events, horizon, priors, config, seed, selected, start)
}

/// Both steps for one component.
#[derive(Debug, Clone)]
pub struct TwoStepResult {
    pub component: usize,
    pub threshold: f64,
    pub full: PosteriorSample,
    pub summary: PosteriorSummary,
    pub selected: Vec<usize>,
    pub refit: PosteriorSample,
}

/// Full posterior, graph selection at `u_T`, and conditional refit.
pub fn two_step(
    k: usize,
    events: &EventData,
    horizon: f64,
    priors: &Priors,
    config: &McmcConfig,
    seed: Seed,
    threshold: f64,
) -> Result<TwoStepResult> {
    let full = run_chain(k, events, horizon, priors, config, seed)?;
    let summary = summarize(&full)?;
    let selected = select_graph(&summary.rho_hat, threshold);
    let refit = refit_conditional(
        k,
        events,
        horizon,
        &selected,
        priors,
        config,
        seed.child(REFIT_TAG),
        Some(&full),
    )?;
    Ok(TwoStepResult {
        component: k,
        threshold,
        full,
        summary,
        selected,
        refit,
    })
}

/// [`two_step`] for several components in parallel.
pub fn two_step_all(
    components: &[usize],
    events: &EventData,
    horizon: f64,
    priors: &Priors,
    config: &McmcConfig,
    seed: Seed,
    threshold: f64,
) -> Vec<Result<TwoStepResult>> {
    components
        .par_iter()
        .map(|k| two_step(*k, events, horizon, priors, config, seed, threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_ranked_example() {
        assert_eq!(select_graph(&[0.5, 0.01, 0.3, 0.005], 0.05), vec![0, 2]);
    }

    #[test]
    fn threshold_extremes() {
        assert!(select_graph(&[0.01, 0.02, 0.015], 0.05).is_empty());
        assert_eq!(select_graph(&[0.2, 0.1, 0.3], 0.05), vec![0, 1, 2]);
        assert!(select_graph(&[], 0.05).is_empty());
    }

    #[test]
    fn ties_prefer_smaller_indices() {
        assert_eq!(select_graph(&[0.1, 0.3, 0.1, 0.1], 0.25), vec![0, 1]);
    }

    #[test]
    fn threshold_formula() {
        let t: f64 = 1e4;
        let k = 10usize;
        let eps = t.powf(-1.0 / 3.0);
        let expected = 2.0 * (1.0 + 10f64.ln()) * t.ln() * eps.max((10f64.ln() / t).sqrt());
        let got = default_threshold(t, k, eps, 2.0).unwrap();
        assert!((got - expected).abs() <= 1e-15 * expected);
        let single = default_threshold(t, 1, eps, 2.0).unwrap();
        assert!((single - 2.0 * t.ln() * eps).abs() < 1e-15);
        assert!(default_threshold(1.0, 3, eps, 2.0).is_err());
    }

    #[test]
    fn threshold_decreases_with_horizon() {
        let policy = ThresholdPolicy::default();
        let mut last = f64::INFINITY;
        for i in 0..60 {
            let t = 100.0 * 1.2f64.powi(i);
            let u = policy.threshold(t, 7).unwrap();
            assert!(u > 0.0 && u < last);
            last = u;
        }
    }

    #[test]
    fn enlarging_threshold_never_enlarges_selection() {
        let rho = [0.3, 0.02, 0.11, 0.0, 0.07, 0.2];
        let mut last = usize::MAX;
        for i in 1..200 {
            let s = select_graph(&rho, i as f64 * 0.005);
            assert!(s.len() <= last);
            last = s.len();
        }
    }
}
