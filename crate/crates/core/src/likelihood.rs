//! Exact log-likelihood of one Hawkes component,
//! `L_{T,k}(f_k) = Σ_{t ∈ N^k ∩ [0,T]} log λ^{(k)}_{t⁻} - ∫_0^T λ^{(k)}_t dt`.
//!
//! With histogram kernels the intensity is piecewise constant between the
//! points `s + t_i` (source events shifted by bin edges), so the compensator
//! is an exact sum over segments. Log-spline kernels are integrated per
//! event and knot interval with Gauss–Legendre quadrature.

use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::model::{intensity_at, ComponentParams};

/// Piecewise-constant intensity of one component on `[start, end]`.
///
/// `rates[j]` is the intensity on `(breakpoints[j], breakpoints[j + 1]]`;
/// the intensity is left-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseIntensity {
    pub component: usize,
    pub breakpoints: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PiecewiseIntensity {
    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().expect("at least two breakpoints")
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.rates)
            .map(|(w, r)| (w[0], w[1], *r))
    }

    /// `λ_{t⁻}` for `t` in `(start, end]`; at `start` the first rate is used.
    pub fn rate_at(&self, t: f64) -> f64 {
        let j = self.breakpoints.partition_point(|b| *b < t);
        self.rates[j.saturating_sub(1).min(self.rates.len() - 1)]
    }

    pub fn integral(&self) -> f64 {
        neumaier_sum(self.segments().map(|(a, b, r)| r * (b - a)))
    }

    pub fn integral_between(&self, lo: f64, hi: f64) -> f64 {
        neumaier_sum(self.segments().filter_map(|(a, b, r)| {
            let l = a.max(lo);
            let h = b.min(hi);
            (h > l).then_some(r * (h - l))
        }))
    }

    pub fn integral_of_square(&self) -> f64 {
        neumaier_sum(self.segments().map(|(a, b, r)| r * r * (b - a)))
    }
}

/// Builds the intensity of component `k` on `[0, T]`.
pub fn build_piecewise_intensity(
    f_k: &ComponentParams,
    k: usize,
    events: &EventData,
    horizon: f64,
) -> Result<PiecewiseIntensity> {
    build_piecewise_intensity_on(f_k, k, events, 0.0, horizon)
}

/// Builds the intensity of component `k` on `[start, end]`.
pub fn build_piecewise_intensity_on(
    f_k: &ComponentParams,
    k: usize,
    events: &EventData,
    start: f64,
    end: f64,
) -> Result<PiecewiseIntensity> {
    if !f_k.all_histogram() {
        return Err(HawkesError::UnsupportedRepresentation(
            "piecewise-constant intensity needs histogram kernels".into(),
        ));
    }
    check_coverage(f_k, events, start, end)?;
    let mut initial = f_k.nu();
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for (source, kernel) in f_k.kernels() {
        if *source >= events.dimension() {
            continue;
        }
        let hist = kernel.as_histogram().expect("checked above");
        let a = hist.horizon();
        let heights = hist.heights();
        let bins = heights.len();
        for s in events.in_half_open(*source, start - a, end) {
            for i in 0..=bins {
                let delta = match i {
                    0 => heights[0],
                    i if i == bins => -heights[bins - 1],
                    i => heights[i] - heights[i - 1],
                };
                if delta == 0.0 {
                    continue;
                }
                let at = s + hist.grid_point(i);
                if at <= start {
                    initial += delta;
                } else if at < end {
                    jumps.push((at, delta));
                }
            }
        }
    }
    jumps.sort_by(|x, y| x.0.total_cmp(&y.0));

    let nu = f_k.nu();
    let mut breakpoints = Vec::with_capacity(jumps.len() + 2);
    let mut rates = Vec::with_capacity(jumps.len() + 1);
    let mut acc = Neumaier::new(initial);
    breakpoints.push(start);
    let mut i = 0;
    while i < jumps.len() {
        let at = jumps[i].0;
        rates.push(acc.value().max(nu));
        breakpoints.push(at);
        while i < jumps.len() && jumps[i].0 == at {
            acc.add(jumps[i].1);
            i += 1;
        }
    }
    rates.push(acc.value().max(nu));
    breakpoints.push(end);
    Ok(PiecewiseIntensity {
        component: k,
        breakpoints,
        rates,
    })
}

fn check_coverage(f_k: &ComponentParams, events: &EventData, start: f64, end: f64) -> Result<()> {
    if !(end >= start) {
        return Err(HawkesError::InvalidParameter(format!(
            "empty integration window [{start}, {end}]"
        )));
    }
    if let Some(a) = f_k.horizon() {
        if events.start() > start - a {
            return Err(HawkesError::MissingHistory {
                time: start,
                needed: start - a,
                available: events.start(),
            });
        }
    }
    if events.end() < end {
        return Err(HawkesError::InvalidParameter(format!(
            "events end at {}, before the horizon {end}",
            events.end()
        )));
    }
    Ok(())
}

/// The two parts of the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub log_intensity_sum: f64,
    pub compensator: f64,
    /// Events of component `k` where the intensity vanished; the value is
    /// `-∞` when this is nonzero.
    pub zero_intensity_events: usize,
}

pub fn log_likelihood(f_k: &ComponentParams, k: usize, events: &EventData, horizon: f64) -> Result<f64> {
    Ok(log_likelihood_detailed(f_k, k, events, horizon)?.value)
}

pub fn log_likelihood_detailed(
    f_k: &ComponentParams,
    k: usize,
    events: &EventData,
    horizon: f64,
) -> Result<LogLikelihood> {
    check_coverage(f_k, events, 0.0, horizon)?;
    let own: &[f64] = if k < events.dimension() {
        events.in_closed(k, 0.0, horizon)
    } else {
        &[]
    };
    let (log_sum, compensator, zeros) = if f_k.all_histogram() {
        let pw = build_piecewise_intensity(f_k, k, events, horizon)?;
        let mut zeros = 0;
        let log_sum = neumaier_sum(own.iter().map(|t| {
            let r = pw.rate_at(*t);
            if r <= 0.0 {
                zeros += 1;
            }
            r.ln()
        }));
        (log_sum, pw.integral(), zeros)
    } else {
        let mut zeros = 0;
        let mut logs = Vec::with_capacity(own.len());
        for t in own {
            let r = intensity_at(f_k, events, *t)?;
            if r <= 0.0 {
                zeros += 1;
            }
            logs.push(r.ln());
        }
        (neumaier_sum(logs), compensator_per_event(f_k, events, horizon)?, zeros)
    };
    let value = if zeros > 0 {
        f64::NEG_INFINITY
    } else {
        log_sum - compensator
    };
    Ok(LogLikelihood {
        value,
        log_intensity_sum: log_sum,
        compensator,
        zero_intensity_events: zeros,
    })
}

/// `∫_0^T λ^{(k)}_t dt`.
pub fn compensator(f_k: &ComponentParams, events: &EventData, horizon: f64) -> Result<f64> {
    compensator_on(f_k, events, 0.0, horizon)
}

/// `∫_a^b λ^{(k)}_t dt`; exact segment sums for histogram kernels.
pub fn compensator_on(f_k: &ComponentParams, events: &EventData, a: f64, b: f64) -> Result<f64> {
    if f_k.all_histogram() {
        Ok(build_piecewise_intensity_on(f_k, usize::MAX, events, a, b)?.integral())
    } else {
        compensator_per_event_on(f_k, events, a, b)
    }
}

/// `ν T + Σ_ℓ Σ_{s ∈ N^ℓ} ∫_{max(0,s)-s}^{min(T,s+A)-s} h_{ℓk}`, one event at a time.
pub fn compensator_per_event(f_k: &ComponentParams, events: &EventData, horizon: f64) -> Result<f64> {
    compensator_per_event_on(f_k, events, 0.0, horizon)
}

pub fn compensator_per_event_on(f_k: &ComponentParams, events: &EventData, a: f64, b: f64) -> Result<f64> {
    check_coverage(f_k, events, a, b)?;
    let mut acc = Neumaier::new(f_k.nu() * (b - a));
    for (source, kernel) in f_k.kernels() {
        if *source >= events.dimension() {
            continue;
        }
        let horizon = kernel.horizon();
        let mass = kernel.mass();
        for s in events.in_half_open(*source, a - horizon, b) {
            let lo = a.max(*s) - s;
            let hi = b.min(s + horizon) - s;
            if lo <= 0.0 && hi >= horizon {
                acc.add(mass);
            } else {
                acc.add(kernel.integral(lo, hi));
            }
        }
    }
    Ok(acc.value())
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn new(init: f64) -> Self {
        Self { sum: init, comp: 0.0 }
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = Neumaier::new(0.0);
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{HistogramKernel, Kernel, SplineKernel};
    use std::collections::BTreeMap;

    fn one_bin(height: f64) -> ComponentParams {
        let h = Kernel::from(HistogramKernel::new(1.0, vec![height]).unwrap());
        ComponentParams::new(1.0, BTreeMap::from([(0, h)])).unwrap()
    }

    #[test]
    fn no_events_gives_single_segment() {
        let f = one_bin(0.5);
        let ev = EventData::empty(1, -1.0, 5.0).unwrap();
        let pw = build_piecewise_intensity(&f, 0, &ev, 5.0).unwrap();
        assert_eq!(pw.breakpoints, vec![0.0, 5.0]);
        assert_eq!(pw.rates, vec![1.0]);
    }

    #[test]
    fn hand_built_segments() {
        let f = one_bin(0.5);
        let ev = EventData::new(-1.0, 2.0, vec![vec![0.5]]).unwrap();
        let pw = build_piecewise_intensity(&f, 0, &ev, 2.0).unwrap();
        assert_eq!(pw.breakpoints, vec![0.0, 0.5, 1.5, 2.0]);
        assert_eq!(pw.rates, vec![1.0, 1.5, 1.0]);
    }

    #[test]
    fn hand_computed_log_likelihood() {
        let f = one_bin(0.5);
        let ev = EventData::new(-1.0, 2.0, vec![vec![0.5, 1.2]]).unwrap();
        let ll = log_likelihood_detailed(&f, 0, &ev, 2.0).unwrap();
        // compensator = 2 + 0.5·1 + 0.5·0.8
        assert!((ll.compensator - 2.9).abs() < 1e-15);
        assert!((ll.value - (1.5f64.ln() - 2.9)).abs() < 1e-15);
        assert!((ll.value - -2.494534891891836).abs() < 1e-12);
    }

    #[test]
    fn poisson_closed_form() {
        let f = ComponentParams::background(2.0).unwrap();
        let ev = EventData::new(0.0, 10.0, vec![vec![0.5, 1.0, 2.0, 3.0, 4.5, 7.0, 9.9]]).unwrap();
        let ll = log_likelihood(&f, 0, &ev, 10.0).unwrap();
        assert!((ll - (7.0 * 2f64.ln() - 20.0)).abs() < 1e-12);
        assert_eq!(
            compensator(&ComponentParams::background(1.0).unwrap(), &ev, 5.0).unwrap(),
            5.0
        );
    }

    #[test]
    fn spline_kernel_is_not_piecewise_constant() {
        let s = Kernel::from(SplineKernel::new(1.0, 2, vec![-1.0, -2.0]).unwrap());
        let f = ComponentParams::new(1.0, BTreeMap::from([(0, s)])).unwrap();
        let ev = EventData::new(-1.0, 2.0, vec![vec![0.5]]).unwrap();
        assert!(matches!(
            build_piecewise_intensity(&f, 0, &ev, 2.0),
            Err(HawkesError::UnsupportedRepresentation(_))
        ));
        // the quadrature path still evaluates the likelihood
        let ll = log_likelihood_detailed(&f, 0, &ev, 2.0).unwrap();
        let brute = {
            let n = 200_000;
            let dx = 2.0 / n as f64;
            (0..n)
                .map(|i| intensity_at(&f, &ev, (i as f64 + 0.5) * dx).unwrap())
                .sum::<f64>()
                * dx
        };
        assert!((ll.compensator - brute).abs() < 1e-7);
    }

    #[test]
    fn missing_history_is_an_error() {
        let f = one_bin(0.5);
        let ev = EventData::new(0.0, 2.0, vec![vec![0.5]]).unwrap();
        assert!(log_likelihood(&f, 0, &ev, 2.0).is_err());
    }
}
