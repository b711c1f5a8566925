//! Model-selection prior for one component `f_k = (ν_k, {h_{ℓk}})`:
//! a size prior on `|S|`, the uniform prior on subsets of that size,
//! i.i.d. kernels on `S` (random histograms or log-splines) and a Gamma
//! prior on `ν_k`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{HawkesError, Result};
use crate::kernel::{HistogramKernel, Kernel, SplineKernel};
use crate::model::ComponentParams;
use crate::rng;

/// Monte Carlo draws used to estimate truncation masses of the kernel prior.
pub const TRUNCATION_DRAWS: usize = 10_000;
const TRUNCATION_SEED: u64 = 0x7472_756e_6361_7465;
const MAX_REJECTIONS: usize = 100_000;

/// Prior on the number of active sources `|S(k)|`, supported on `0..=cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SizePriorSpec {
    TruncatedUniform {
        cap: usize,
    },
    TruncatedPoisson {
        mean: f64,
        cap: usize,
    },
    /// Unnormalized mass `exp(-a3 exp(a2 exp(a1 s^q)))`.
    DoubleExponentialTail {
        q: f64,
        a1: f64,
        a2: f64,
        a3: f64,
        cap: usize,
    },
}

impl SizePriorSpec {
    pub fn cap(&self) -> usize {
        match self {
            Self::TruncatedUniform { cap }
            | Self::TruncatedPoisson { cap, .. }
            | Self::DoubleExponentialTail { cap, .. } => *cap,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(HawkesError::Config(format!("size prior: {what}")));
        match *self {
            Self::TruncatedUniform { .. } => Ok(()),
            Self::TruncatedPoisson { mean, .. } if !(mean > 0.0 && mean.is_finite()) => {
                bad("poisson mean must be positive")
            }
            Self::DoubleExponentialTail { q, a1, a2, a3, .. } if !(q > 0.0 && a1 > 0.0 && a2 > 0.0 && a3 > 0.0) => {
                bad("q, a1, a2, a3 must be positive")
            }
            _ => Ok(()),
        }
    }

    fn log_weight(&self, s: usize) -> f64 {
        match *self {
            Self::TruncatedUniform { .. } => 0.0,
            Self::TruncatedPoisson { mean, .. } => poisson_log_weight(mean, s),
            Self::DoubleExponentialTail { q, a1, a2, a3, .. } => -a3 * (a2 * (a1 * (s as f64).powf(q)).exp()).exp(),
        }
    }

    /// Normalized log-pmf over `0..=cap`.
    pub fn log_pmf_table(&self) -> Result<Vec<f64>> {
        self.validate()?;
        normalize_log((0..=self.cap()).map(|s| self.log_weight(s)).collect())
    }
}

/// Normalized size-prior pmf; zero outside `0..=cap`.
pub fn size_prior_pmf(spec: &SizePriorSpec, s: usize) -> Result<f64> {
    let table = spec.log_pmf_table()?;
    Ok(table.get(s).map_or(0.0, |l| l.exp()))
}

fn default_max_bins() -> usize {
    64
}

fn default_max_coefficients() -> usize {
    20
}

/// Random histogram prior: `I ~ Poisson(mean)` truncated to `1..=max_bins`,
/// `(w_1, ..., w_{I+1}) ~ Dirichlet(α, ..., α)`, `h_i = w_{i+1} I / A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistPriorSpec {
    pub mean: f64,
    pub alpha: f64,
    #[serde(default = "default_max_bins")]
    pub max_bins: usize,
    /// Optional cap on `sup h`; the prior is conditioned on it.
    #[serde(default)]
    pub sup_cap: Option<f64>,
}

/// Log-spline prior: `J ~ Poisson(mean)` truncated to `order..=max_coefficients`,
/// `θ_j ~ N(0, τ²)` i.i.d., conditioned on `∫h < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplinePriorSpec {
    pub mean: f64,
    pub tau: f64,
    pub order: usize,
    #[serde(default = "default_max_coefficients")]
    pub max_coefficients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelPriorSpec {
    Histogram(HistPriorSpec),
    Spline(SplinePriorSpec),
}

fn default_nu_shape() -> f64 {
    2.0
}

/// Gamma prior on `ν_k` (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuPriorSpec {
    #[serde(default = "default_nu_shape")]
    pub shape: f64,
    pub rate: f64,
}

impl NuPriorSpec {
    /// `Gamma(2, 2/ν̄)`, which has mean `ν̄`.
    pub fn with_mean(nu_bar: f64) -> Self {
        Self {
            shape: 2.0,
            rate: 2.0 / nu_bar,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Full prior of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    /// Kernel support `[0, A]`.
    pub horizon: f64,
    pub size: SizePriorSpec,
    pub kernel: KernelPriorSpec,
    pub nu: NuPriorSpec,
}

/// A [`PriorSpec`] compiled for dimension `K`, with normalized pmf tables
/// and lazily estimated truncation masses.
#[derive(Debug)]
pub struct Priors {
    spec: PriorSpec,
    dimension: usize,
    size_log_pmf: Vec<f64>,
    count_min: usize,
    count_log_pmf: Vec<f64>,
    log_truncation: Vec<OnceLock<f64>>,
}

impl Priors {
    pub fn new(spec: PriorSpec, dimension: usize) -> Result<Self> {
        if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
            return Err(HawkesError::Config(format!(
                "prior horizon must be positive, got {}",
                spec.horizon
            )));
        }
        if spec.size.cap() > dimension {
            return Err(HawkesError::Config(format!(
                "size prior cap {} exceeds the dimension {dimension}",
                spec.size.cap()
            )));
        }
        if !(spec.nu.shape > 0.0 && spec.nu.rate > 0.0) {
            return Err(HawkesError::Config("nu prior shape and rate must be positive".into()));
        }
        let size_log_pmf = spec.size.log_pmf_table()?;
        let (count_min, count_max, mean) = match &spec.kernel {
            KernelPriorSpec::Histogram(h) => {
                if !(h.mean > 0.0 && h.alpha > 0.0) || h.max_bins == 0 {
                    return Err(HawkesError::Config(
                        "histogram prior needs mean > 0, alpha > 0, max_bins >= 1".into(),
                    ));
                }
                if let Some(cap) = h.sup_cap {
                    if !(cap > 0.0) {
                        return Err(HawkesError::Config("sup_cap must be positive".into()));
                    }
                }
                (1, h.max_bins, h.mean)
            }
            KernelPriorSpec::Spline(s) => {
                if !(s.mean > 0.0 && s.tau > 0.0) {
                    return Err(HawkesError::Config("spline prior needs mean > 0 and tau > 0".into()));
                }
                if s.order == 0 || s.order > crate::kernel::MAX_SPLINE_ORDER || s.max_coefficients < s.order {
                    return Err(HawkesError::Config(format!(
                        "spline prior needs 1 <= order <= max_coefficients, got order {} and max {}",
                        s.order, s.max_coefficients
                    )));
                }
                (s.order, s.max_coefficients, s.mean)
            }
        };
        let count_log_pmf = normalize_log((count_min..=count_max).map(|n| poisson_log_weight(mean, n)).collect())?;
        let log_truncation = (count_min..=count_max).map(|_| OnceLock::new()).collect();
        Ok(Self {
            spec,
            dimension,
            size_log_pmf,
            count_min,
            count_log_pmf,
            log_truncation,
        })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn size_cap(&self) -> usize {
        self.spec.size.cap()
    }

    pub fn is_histogram(&self) -> bool {
        matches!(self.spec.kernel, KernelPriorSpec::Histogram(_))
    }

    pub fn size_log_pmf(&self, s: usize) -> f64 {
        self.size_log_pmf.get(s).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `log C(K, s)`.
    pub fn log_subset_count(&self, s: usize) -> f64 {
        log_binomial(self.dimension, s)
    }

    /// Range of the bin count `I` (histograms) or coefficient count `J` (splines).
    pub fn count_range(&self) -> (usize, usize) {
        (self.count_min, self.count_min + self.count_log_pmf.len() - 1)
    }

    pub fn count_log_pmf(&self, n: usize) -> f64 {
        n.checked_sub(self.count_min)
            .and_then(|i| self.count_log_pmf.get(i))
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn log_nu_density(&self, nu: f64) -> f64 {
        if !(nu > 0.0 && nu.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let NuPriorSpec { shape, rate } = self.spec.nu;
        shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * nu.ln() - rate * nu
    }

    /// `log Dirichlet(α, ..., α)` density of a weight vector in free coordinates.
    pub fn log_weight_density(&self, weights: &[f64]) -> f64 {
        let KernelPriorSpec::Histogram(h) = &self.spec.kernel else {
            return f64::NEG_INFINITY;
        };
        log_dirichlet_density(h.alpha, weights)
    }

    /// `Σ_j log N(θ_j; 0, τ²)`.
    pub fn log_coefficient_density(&self, theta: &[f64]) -> f64 {
        let KernelPriorSpec::Spline(s) = &self.spec.kernel else {
            return f64::NEG_INFINITY;
        };
        let norm = -0.5 * (2.0 * std::f64::consts::PI).ln() - s.tau.ln();
        theta.iter().map(|t| norm - 0.5 * (t / s.tau).powi(2)).sum()
    }

    /// Whether a kernel violates the optional sup cap.
    pub fn exceeds_sup_cap(&self, kernel: &HistogramKernel) -> bool {
        match &self.spec.kernel {
            KernelPriorSpec::Histogram(HistPriorSpec { sup_cap: Some(cap), .. }) => kernel.sup_norm() > *cap,
            _ => false,
        }
    }

    /// Log of the prior probability that an untruncated kernel with count `n`
    /// is admissible (`∫h < 1` for splines, `sup h ≤ cap` for capped
    /// histograms). Estimated once by Monte Carlo with a fixed seed; a zero
    /// hit count is floored at half a draw.
    pub fn log_truncation(&self, n: usize) -> f64 {
        let Some(cell) = n.checked_sub(self.count_min).and_then(|i| self.log_truncation.get(i)) else {
            return 0.0;
        };
        *cell.get_or_init(|| {
            let needs = match &self.spec.kernel {
                KernelPriorSpec::Histogram(h) => h.sup_cap.is_some(),
                KernelPriorSpec::Spline(_) => true,
            };
            if !needs {
                return 0.0;
            }
            let mut rng = rng::stream(TRUNCATION_SEED, n as u64, 0);
            let hits = (0..TRUNCATION_DRAWS)
                .filter(|_| self.draw_untruncated(n, &mut rng).is_some())
                .count();
            ((hits as f64).max(0.5) / TRUNCATION_DRAWS as f64).ln()
        })
    }

    /// One kernel draw with count `n`, or `None` if it falls outside the
    /// truncation region.
    fn draw_untruncated<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Kernel> {
        match &self.spec.kernel {
            KernelPriorSpec::Histogram(h) => {
                let w = sample_dirichlet(h.alpha, n + 1, rng);
                let k = HistogramKernel::from_weights(self.spec.horizon, &w).ok()?;
                (!self.exceeds_sup_cap(&k)).then(|| k.into())
            }
            KernelPriorSpec::Spline(s) => {
                let normal = Normal::new(0.0, s.tau).expect("tau checked positive");
                let theta = (0..n).map(|_| normal.sample(rng)).collect();
                SplineKernel::new(self.spec.horizon, s.order, theta)
                    .ok()
                    .map(Kernel::from)
            }
        }
    }

    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.count_min + sample_log_pmf(&self.count_log_pmf, rng)
    }

    /// A kernel with count `n` from the (truncated) kernel prior.
    pub fn sample_kernel_with_count<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Kernel> {
        for _ in 0..MAX_REJECTIONS {
            if let Some(k) = self.draw_untruncated(n, rng) {
                return Ok(k);
            }
        }
        Err(HawkesError::Generation(format!(
            "kernel prior with count {n} rejected {MAX_REJECTIONS} draws in a row"
        )))
    }

    pub fn sample_kernel<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Kernel> {
        let n = self.sample_count(rng);
        self.sample_kernel_with_count(n, rng)
    }

    pub fn sample_nu<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let NuPriorSpec { shape, rate } = self.spec.nu;
        Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng)
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_log_pmf(&self.size_log_pmf, rng)
    }

    /// Uniform subset of `0..K` of size `s`, sorted.
    pub fn sample_subset<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Vec<usize> {
        let mut v = rand::seq::index::sample(rng, self.dimension, s).into_vec();
        v.sort_unstable();
        v
    }

    /// Log-density of a kernel under the kernel prior, in heights (or
    /// coefficient) coordinates, including the count pmf.
    pub fn log_kernel_density(&self, kernel: &Kernel) -> f64 {
        let n = match kernel {
            Kernel::Histogram(h) => h.bin_count(),
            Kernel::Spline(s) => s.coefficients().len(),
        };
        self.count_log_pmf(n) + self.log_kernel_density_given_count(kernel)
    }

    /// Kernel log-density conditional on its bin or coefficient count.
    pub fn log_kernel_density_given_count(&self, kernel: &Kernel) -> f64 {
        if kernel.horizon() != self.spec.horizon {
            return f64::NEG_INFINITY;
        }
        match (kernel, &self.spec.kernel) {
            (Kernel::Histogram(h), KernelPriorSpec::Histogram(_)) => {
                let bins = h.bin_count();
                if self.exceeds_sup_cap(h) {
                    return f64::NEG_INFINITY;
                }
                let w = h.weights();
                if !(w[0] > 0.0) {
                    return f64::NEG_INFINITY;
                }
                // heights -> weights has Jacobian (A / I)^I
                self.log_weight_density(&w) + bins as f64 * h.bin_width().ln() - self.log_truncation(bins)
            }
            (Kernel::Spline(s), KernelPriorSpec::Spline(p)) if s.order() == p.order => {
                self.log_coefficient_density(s.coefficients()) - self.log_truncation(s.coefficients().len())
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Draws `f_k`: `|S|` from the size prior, `S` uniformly among subsets of
/// that size, kernels i.i.d. on `S`, and `ν_k`.
pub fn sample_component_prior<R: Rng + ?Sized>(priors: &Priors, rng: &mut R) -> Result<ComponentParams> {
    let s = priors.sample_size(rng);
    let sources = priors.sample_subset(s, rng);
    let mut kernels = BTreeMap::new();
    for l in sources {
        kernels.insert(l, priors.sample_kernel(rng)?);
    }
    ComponentParams::with_active_set(priors.sample_nu(rng), kernels)
}

/// `log π(f_k)`; `-∞` outside the support.
pub fn log_prior_density(priors: &Priors, f_k: &ComponentParams) -> f64 {
    let s = f_k.kernels().len();
    if s > priors.size_cap() || f_k.kernels().keys().any(|l| *l >= priors.dimension()) {
        return f64::NEG_INFINITY;
    }
    let mut total = priors.size_log_pmf(s) - priors.log_subset_count(s) + priors.log_nu_density(f_k.nu());
    for kernel in f_k.kernels().values() {
        total += priors.log_kernel_density(kernel);
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

/// `Dirichlet(α, ..., α)` draw of length `n`, computed in log space so that
/// small `α` does not underflow.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(alpha + 1.0, 1.0).expect("alpha positive");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            g.sample(rng).ln() + u.ln() / alpha
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// `log Dirichlet(α, ..., α)` density of `w` (length `n`, on the simplex).
pub fn log_dirichlet_density(alpha: f64, w: &[f64]) -> f64 {
    let n = w.len() as f64;
    if w.iter().any(|x| *x < 0.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n * alpha) - n * ln_gamma(alpha) + (alpha - 1.0) * w.iter().map(|x| x.ln()).sum::<f64>()
}

pub fn log_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// A standard normal draw (shared by samplers that need raw noise).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn poisson_log_weight(mean: f64, n: usize) -> f64 {
    n as f64 * mean.ln() - mean - ln_gamma(n as f64 + 1.0)
}

fn normalize_log(mut logs: Vec<f64>) -> Result<Vec<f64>> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(HawkesError::Config("prior pmf has no finite mass".into()));
    }
    let z = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logs.iter_mut().for_each(|l| *l -= z);
    Ok(logs)
}

fn sample_log_pmf<R: Rng + ?Sized>(log_pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in log_pmf.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    log_pmf.iter().rposition(|l| l.is_finite()).unwrap_or(0)
}
