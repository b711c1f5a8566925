//! Interaction kernels supported on `[0, A]`.
//!
//! Two representations are available: piecewise-constant histograms on a
//! regular grid and log-splines `exp(Σ θ_j B_j)` over a clamped B-spline
//! basis on a regular knot grid. Both are nonnegative and carry total mass
//! strictly below one.

use rand::Rng;

use crate::error::{HawkesError, Result};
use crate::quadrature;

/// Largest supported B-spline order.
pub const MAX_SPLINE_ORDER: usize = 12;

/// Histogram kernel `h(x) = h_i` for `x ∈ (iA/I, (i+1)A/I]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramKernel {
    horizon: f64,
    heights: Vec<f64>,
}

impl HistogramKernel {
    pub fn new(horizon: f64, heights: Vec<f64>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(HawkesError::InvalidParameter(format!(
                "kernel horizon must be positive, got {horizon}"
            )));
        }
        if heights.is_empty() {
            return Err(HawkesError::InvalidParameter(
                "histogram kernel needs at least one bin".into(),
            ));
        }
        if let Some(h) = heights.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(HawkesError::InvalidParameter(format!(
                "histogram heights must be finite and nonnegative, got {h}"
            )));
        }
        let kernel = Self { horizon, heights };
        let mass = kernel.mass();
        if mass >= 1.0 {
            return Err(HawkesError::InvalidParameter(format!(
                "histogram kernel mass {mass} is not below 1"
            )));
        }
        Ok(kernel)
    }

    /// Builds heights `h_i = w_{i+1} I / A` from Dirichlet weights
    /// `(w_1, ..., w_{I+1})`; `w_1` is the leftover mass.
    pub fn from_weights(horizon: f64, weights: &[f64]) -> Result<Self> {
        if weights.len() < 2 {
            return Err(HawkesError::InvalidParameter(
                "weight vector needs at least two entries".into(),
            ));
        }
        let bins = weights.len() - 1;
        let scale = bins as f64 / horizon;
        Self::new(horizon, weights[1..].iter().map(|w| w * scale).collect())
    }

    /// Inverse of [`HistogramKernel::from_weights`].
    pub fn weights(&self) -> Vec<f64> {
        let width = self.bin_width();
        let mut w = Vec::with_capacity(self.heights.len() + 1);
        w.push(0.0);
        w.extend(self.heights.iter().map(|h| h * width));
        w[0] = 1.0 - w[1..].iter().sum::<f64>();
        w
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn bin_count(&self) -> usize {
        self.heights.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.horizon / self.heights.len() as f64
    }

    /// Grid point `t_i = iA/I`.
    pub fn grid_point(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.heights.len() as f64
    }

    /// Index of the bin `(t_i, t_{i+1}]` containing `x`, if `x ∈ (0, A]`.
    #[inline]
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x > 0.0 && x <= self.horizon) {
            return None;
        }
        let bins = self.heights.len();
        // ceil(y) - 1 without a libm call; y > 0 here
        let y = x * bins as f64 / self.horizon;
        let floor = y as usize;
        let i = floor - usize::from(floor as f64 == y && floor > 0);
        Some(i.min(bins - 1))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.bin_of(x).map_or(0.0, |i| self.heights[i])
    }

    pub fn mass(&self) -> f64 {
        let width = self.bin_width();
        self.heights.iter().map(|h| h * width).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    /// Exact `∫_a^b h` (clipped to `[0, A]`).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(self.horizon);
        if b <= a {
            return 0.0;
        }
        if a == 0.0 && b == self.horizon {
            return self.mass();
        }
        let bins = self.heights.len();
        let mut total = 0.0;
        for (i, h) in self.heights.iter().enumerate() {
            let lo = self.grid_point(i).max(a);
            let hi = if i + 1 == bins {
                self.horizon
            } else {
                self.grid_point(i + 1)
            }
            .min(b);
            if hi > lo {
                total += h * (hi - lo);
            }
        }
        total
    }

    fn sample_lag<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.heights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut bin = self.heights.len() - 1;
        for (i, h) in self.heights.iter().enumerate() {
            if u < *h {
                bin = i;
                break;
            }
            u -= h;
        }
        // uniform on (t_i, t_{i+1}]
        let lo = self.grid_point(bin);
        let x = lo + (1.0 - rng.random::<f64>()) * self.bin_width();
        x.min(self.horizon)
    }
}

/// Log-spline kernel `h(x) = exp(Σ_j θ_j B_j(x))` with a clamped B-spline
/// basis of order `m` (degree `m - 1`) on `I = J - m + 1` regular intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineKernel {
    horizon: f64,
    order: usize,
    coefficients: Vec<f64>,
    knots: Vec<f64>,
    interval_mass: Vec<f64>,
    mass: f64,
}

impl SplineKernel {
    pub fn new(horizon: f64, order: usize, coefficients: Vec<f64>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(HawkesError::InvalidParameter(format!(
                "kernel horizon must be positive, got {horizon}"
            )));
        }
        if order == 0 || order > MAX_SPLINE_ORDER {
            return Err(HawkesError::InvalidParameter(format!(
                "spline order must lie in 1..={MAX_SPLINE_ORDER}, got {order}"
            )));
        }
        if coefficients.len() < order {
            return Err(HawkesError::InvalidParameter(format!(
                "spline of order {order} needs at least {order} coefficients, got {}",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(HawkesError::InvalidParameter(
                "spline coefficients must be finite".into(),
            ));
        }
        let intervals = coefficients.len() - order + 1;
        let mut knots = Vec::with_capacity(coefficients.len() + order);
        knots.extend(std::iter::repeat_n(0.0, order));
        knots.extend((1..intervals).map(|i| horizon * i as f64 / intervals as f64));
        knots.extend(std::iter::repeat_n(horizon, order));
        let mut kernel = Self {
            horizon,
            order,
            coefficients,
            knots,
            interval_mass: Vec::new(),
            mass: 0.0,
        };
        kernel.interval_mass = (0..intervals)
            .map(|i| {
                let (lo, hi) = kernel.interval_bounds(i);
                quadrature::integrate(|x| kernel.eval_in(i, x), lo, hi)
            })
            .collect();
        kernel.mass = kernel.interval_mass.iter().sum();
        if !(kernel.mass < 1.0) {
            return Err(HawkesError::InvalidParameter(format!(
                "spline kernel mass {} is not below 1",
                kernel.mass
            )));
        }
        Ok(kernel)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intervals(&self) -> usize {
        self.coefficients.len() - self.order + 1
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn interval_bounds(&self, i: usize) -> (f64, f64) {
        let p = self.order - 1;
        (self.knots[i + p], self.knots[i + p + 1])
    }

    fn interval_of(&self, x: f64) -> usize {
        let n = self.intervals();
        ((x / self.horizon * n as f64).floor() as usize).min(n - 1)
    }

    /// Log-intensity `Σ θ_j B_j(x)` using the basis functions of interval `i`.
    fn log_eval_in(&self, i: usize, x: f64) -> f64 {
        let p = self.order - 1;
        let span = i + p;
        let u = &self.knots;
        let mut nb = [0.0f64; MAX_SPLINE_ORDER + 1];
        let mut lb = [0.0f64; MAX_SPLINE_ORDER + 1];
        let mut rb = [0.0f64; MAX_SPLINE_ORDER + 1];
        nb[0] = 1.0;
        for j in 1..=p {
            lb[j] = x - u[span + 1 - j];
            rb[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = nb[r] / (rb[r + 1] + lb[j - r]);
                nb[r] = saved + rb[r + 1] * temp;
                saved = lb[j - r] * temp;
            }
            nb[j] = saved;
        }
        (0..=p).map(|r| self.coefficients[i + r] * nb[r]).sum()
    }

    fn eval_in(&self, i: usize, x: f64) -> f64 {
        self.log_eval_in(i, x).exp()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if !(x > 0.0 && x <= self.horizon) {
            return 0.0;
        }
        self.eval_in(self.interval_of(x), x)
    }

    /// Upper bound of `h` on interval `i`: B-splines are a nonnegative
    /// partition of unity, so the exponent never exceeds the largest
    /// active coefficient.
    fn interval_log_bound(&self, i: usize) -> f64 {
        self.coefficients[i..i + self.order]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.intervals())
            .map(|i| self.interval_log_bound(i).exp())
            .fold(0.0, f64::max)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(self.horizon);
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.intervals() {
            let (lo, hi) = self.interval_bounds(i);
            let l = lo.max(a);
            let r = hi.min(b);
            if r <= l {
                continue;
            }
            if l == lo && r == hi {
                total += self.interval_mass[i];
            } else {
                total += quadrature::integrate(|x| self.eval_in(i, x), l, r);
            }
        }
        total
    }

    fn sample_lag<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u = rng.random::<f64>() * self.mass;
        let mut interval = self.intervals() - 1;
        for (i, m) in self.interval_mass.iter().enumerate() {
            if u < *m {
                interval = i;
                break;
            }
            u -= m;
        }
        let (lo, hi) = self.interval_bounds(interval);
        let log_bound = self.interval_log_bound(interval);
        loop {
            let x = lo + (1.0 - rng.random::<f64>()) * (hi - lo);
            let accept = (self.log_eval_in(interval, x) - log_bound).exp();
            if rng.random::<f64>() < accept {
                return x.min(self.horizon);
            }
        }
    }
}

/// An interaction kernel `h_{ℓk}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Histogram(HistogramKernel),
    Spline(SplineKernel),
}

impl Kernel {
    pub fn horizon(&self) -> f64 {
        match self {
            Kernel::Histogram(h) => h.horizon(),
            Kernel::Spline(s) => s.horizon(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Histogram(h) => h.eval(x),
            Kernel::Spline(s) => s.eval(x),
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Kernel::Histogram(h) => h.mass(),
            Kernel::Spline(s) => s.mass(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Kernel::Histogram(h) => h.sup_norm(),
            Kernel::Spline(s) => s.sup_norm(),
        }
    }

    /// `∫_a^b h(x) dx` with the integration range clipped to `[0, A]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Kernel::Histogram(h) => h.integral(a, b),
            Kernel::Spline(s) => s.integral(a, b),
        }
    }

    /// Lags where the kernel's representation changes: bin edges or knots.
    pub fn grid(&self) -> Vec<f64> {
        match self {
            Kernel::Histogram(h) => (0..=h.bin_count()).map(|i| h.grid_point(i)).collect(),
            Kernel::Spline(s) => {
                let mut g: Vec<f64> = (0..s.intervals()).map(|i| s.interval_bounds(i).0).collect();
                g.push(s.horizon());
                g
            }
        }
    }

    pub fn is_histogram(&self) -> bool {
        matches!(self, Kernel::Histogram(_))
    }

    pub fn as_histogram(&self) -> Option<&HistogramKernel> {
        match self {
            Kernel::Histogram(h) => Some(h),
            Kernel::Spline(_) => None,
        }
    }

    /// Draws a lag from the density `h / ∫h`.
    pub fn sample_lag<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Kernel::Histogram(h) => h.sample_lag(rng),
            Kernel::Spline(s) => s.sample_lag(rng),
        }
    }

    /// The kernel multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Kernel> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(HawkesError::InvalidParameter(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(match self {
            Kernel::Histogram(h) => Kernel::Histogram(HistogramKernel::new(
                h.horizon(),
                h.heights().iter().map(|x| x * factor).collect(),
            )?),
            Kernel::Spline(s) => {
                let shift = factor.ln();
                Kernel::Spline(SplineKernel::new(
                    s.horizon(),
                    s.order(),
                    s.coefficients().iter().map(|c| c + shift).collect(),
                )?)
            }
        })
    }
}

impl From<HistogramKernel> for Kernel {
    fn from(h: HistogramKernel) -> Self {
        Kernel::Histogram(h)
    }
}

impl From<SplineKernel> for Kernel {
    fn from(s: SplineKernel) -> Self {
        Kernel::Spline(s)
    }
}
