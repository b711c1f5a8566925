//! Losses between an estimate `f_k` and the truth `f_k⁰`: the empirical
//! intensity distance `d_{1,T}`, the direct `L1` distance with its split
//! into background, false-mass and active parts, and graph-recovery metrics.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::kernel::Kernel;
use crate::likelihood::{build_piecewise_intensity, neumaier_sum, PiecewiseIntensity};
use crate::model::{intensity_at, ComponentParams};
use crate::quadrature;

const QUADRATURE_TOL: f64 = 1e-11;
const QUADRATURE_DEPTH: u32 = 30;

/// `L1` distance and its decomposition relative to the truth's active set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct L1Report {
    pub total: f64,
    /// `|ν_k - ν_k⁰|`.
    pub nu: f64,
    /// `Σ_{ℓ ∉ S₀(k)} ρ_{ℓk}`.
    pub false_mass: f64,
    /// `Σ_{ℓ ∈ S₀(k)} ‖h_{ℓk} - h⁰_{ℓk}‖₁`.
    pub active: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub d1t: f64,
    pub l1: L1Report,
}

/// Both losses of one estimate.
pub fn loss_report(
    f_k: &ComponentParams,
    truth: &ComponentParams,
    events: &EventData,
    horizon: f64,
) -> Result<LossReport> {
    Ok(LossReport {
        d1t: d1t(f_k, truth, events, horizon)?,
        l1: l1_distance(f_k, truth),
    })
}

fn check_horizons(f_k: &ComponentParams, truth: &ComponentParams) -> Result<()> {
    match (f_k.horizon(), truth.horizon()) {
        (Some(a), Some(b)) if a != b => Err(HawkesError::Config(format!(
            "estimate and truth use different kernel horizons ({a} vs {b})"
        ))),
        _ => Ok(()),
    }
}

/// `(1/T) ∫_0^T |λ_t(f_k) - λ_t(f_k⁰)| dt`.
///
/// Exact for histogram kernels (merged breakpoints of both intensities);
/// otherwise adaptive Gauss–Legendre quadrature between the points where
/// either intensity can be non-smooth.
pub fn d1t(f_k: &ComponentParams, truth: &ComponentParams, events: &EventData, horizon: f64) -> Result<f64> {
    check_horizons(f_k, truth)?;
    if !(horizon > 0.0) {
        return Err(HawkesError::InvalidParameter(format!(
            "d1T needs a positive horizon, got {horizon}"
        )));
    }
    if f_k.all_histogram() && truth.all_histogram() {
        let a = build_piecewise_intensity(f_k, usize::MAX, events, horizon)?;
        let b = build_piecewise_intensity(truth, usize::MAX, events, horizon)?;
        return Ok(piecewise_l1(&a, &b) / horizon);
    }
    let cuts = smoothness_breaks(&[f_k, truth], events, horizon);
    let mut parts = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let f = |t: f64| {
            (intensity_at(f_k, events, t).unwrap_or(f64::NAN) - intensity_at(truth, events, t).unwrap_or(f64::NAN))
                .abs()
        };
        parts.push(quadrature::integrate_adaptive(
            &f,
            w[0],
            w[1],
            QUADRATURE_TOL,
            QUADRATURE_DEPTH,
        ));
    }
    // surface missing history as an error rather than a NaN
    intensity_at(f_k, events, 0.0)?;
    intensity_at(truth, events, 0.0)?;
    Ok(neumaier_sum(parts) / horizon)
}

/// `∫ |a - b|` over the common window of two piecewise-constant intensities.
pub fn piecewise_l1(a: &PiecewiseIntensity, b: &PiecewiseIntensity) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut t = a.start().max(b.start());
    let end = a.end().min(b.end());
    let mut parts = Vec::with_capacity(a.rates.len() + b.rates.len());
    while t < end {
        while a.breakpoints[i + 1] <= t {
            i += 1;
        }
        while b.breakpoints[j + 1] <= t {
            j += 1;
        }
        let next = a.breakpoints[i + 1].min(b.breakpoints[j + 1]).min(end);
        parts.push((a.rates[i] - b.rates[j]).abs() * (next - t));
        t = next;
    }
    neumaier_sum(parts)
}

/// Sorted times in `[0, T]` where some intensity may lose smoothness.
fn smoothness_breaks(params: &[&ComponentParams], events: &EventData, horizon: f64) -> Vec<f64> {
    let mut cuts = vec![0.0, horizon];
    for f in params {
        for (l, kernel) in f.kernels() {
            if *l >= events.dimension() {
                continue;
            }
            let grid = kernel.grid();
            for s in events.in_half_open(*l, -kernel.horizon(), horizon) {
                cuts.extend(grid.iter().map(|g| s + g).filter(|t| *t > 0.0 && *t < horizon));
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// `‖h - g‖₁` on `[0, A]`; exact for two histograms.
pub fn kernel_l1(h: &Kernel, g: &Kernel) -> f64 {
    let mut cuts: Vec<f64> = h.grid().into_iter().chain(g.grid()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let exact = h.is_histogram() && g.is_histogram();
    neumaier_sum(cuts.windows(2).map(|w| {
        if exact {
            let mid = 0.5 * (w[0] + w[1]);
            (h.eval(mid) - g.eval(mid)).abs() * (w[1] - w[0])
        } else {
            let f = |x: f64| (h.eval(x) - g.eval(x)).abs();
            quadrature::integrate_adaptive(&f, w[0], w[1], QUADRATURE_TOL, QUADRATURE_DEPTH)
        }
    }))
}

/// `|ν_k - ν_k⁰| + Σ_ℓ ‖h_{ℓk} - h⁰_{ℓk}‖₁`, split by the truth's active set.
pub fn l1_distance(f_k: &ComponentParams, truth: &ComponentParams) -> L1Report {
    let nu = (f_k.nu() - truth.nu()).abs();
    let mut false_mass = Vec::new();
    let mut active = Vec::new();
    for (l, h) in f_k.kernels() {
        match truth.kernel(*l) {
            Some(h0) => active.push(kernel_l1(h, h0)),
            None => false_mass.push(h.mass()),
        }
    }
    for (l, h0) in truth.kernels() {
        if f_k.kernel(*l).is_none() {
            active.push(h0.mass());
        }
    }
    let false_mass = neumaier_sum(false_mass);
    let active = neumaier_sum(active);
    L1Report {
        total: nu + false_mass + active,
        nu,
        false_mass,
        active,
    }
}

/// Edgewise recovery of the graph over all `K²` candidate edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphMetrics {
    /// 1 when nothing is selected (no false positives).
    pub precision: f64,
    /// 1 when the truth has no edges.
    pub recall: f64,
    /// Fraction of components with `Ŝ(k) = S₀(k)`.
    pub exact_recovery: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Compares per-component source sets `Ŝ(k)` with `S₀(k)`.
pub fn graph_metrics(selected: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<GraphMetrics> {
    if selected.len() != truth.len() {
        return Err(HawkesError::InvalidParameter(format!(
            "graph sizes differ: {} vs {} components",
            selected.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut exact) = (0, 0, 0, 0);
    for (s, t) in selected.iter().zip(truth) {
        let s: BTreeSet<_> = s.iter().collect();
        let t: BTreeSet<_> = t.iter().collect();
        tp += s.intersection(&t).count();
        fp += s.difference(&t).count();
        fn_ += t.difference(&s).count();
        exact += usize::from(s == t);
    }
    Ok(GraphMetrics {
        precision: if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        },
        recall: if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        },
        exact_recovery: if truth.is_empty() {
            1.0
        } else {
            exact as f64 / truth.len() as f64
        },
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    })
}
