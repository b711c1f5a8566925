//! Parameter types of the linear Hawkes model and the matrix functionals
//! of its mass matrix.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::kernel::Kernel;

/// Kernels with mass below this are treated as absent.
pub const ZERO_MASS: f64 = 1e-12;

/// `f_k = (ν_k, {h_{ℓk} : ℓ ∈ S(k)})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    nu: f64,
    kernels: BTreeMap<usize, Kernel>,
}

impl ComponentParams {
    /// Kernels with numerically zero mass are dropped from the active set.
    pub fn new(nu: f64, kernels: BTreeMap<usize, Kernel>) -> Result<Self> {
        let mut f = Self::with_active_set(nu, kernels)?;
        f.kernels.retain(|_, k| k.mass() >= ZERO_MASS);
        Ok(f)
    }

    /// Like [`ComponentParams::new`] but keeps every kernel in the active
    /// set, including numerically zero ones (posterior draws need this).
    pub fn with_active_set(nu: f64, kernels: BTreeMap<usize, Kernel>) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(HawkesError::InvalidParameter(format!(
                "background rate must be positive, got {nu}"
            )));
        }
        let mut horizon = None;
        for k in kernels.values() {
            match horizon {
                None => horizon = Some(k.horizon()),
                Some(a) if a != k.horizon() => {
                    return Err(HawkesError::InvalidParameter(format!(
                        "kernels of one component disagree on the horizon ({a} vs {})",
                        k.horizon()
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { nu, kernels })
    }

    pub fn background(nu: f64) -> Result<Self> {
        Self::new(nu, BTreeMap::new())
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kernels(&self) -> &BTreeMap<usize, Kernel> {
        &self.kernels
    }

    pub fn kernel(&self, source: usize) -> Option<&Kernel> {
        self.kernels.get(&source)
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.kernels.keys().copied().collect()
    }

    pub fn horizon(&self) -> Option<f64> {
        self.kernels.values().next().map(Kernel::horizon)
    }

    pub fn mass(&self, source: usize) -> f64 {
        self.kernels.get(&source).map_or(0.0, Kernel::mass)
    }

    pub fn all_histogram(&self) -> bool {
        self.kernels.values().all(Kernel::is_histogram)
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(nu, self.kernels.clone())
    }

    /// Every rate and kernel multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let kernels = self
            .kernels
            .iter()
            .map(|(l, k)| Ok((*l, k.scaled(factor)?)))
            .collect::<Result<_>>()?;
        Self::new(self.nu * factor, kernels)
    }
}

/// `f = (f_1, ..., f_K)` sharing one kernel horizon `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    horizon: f64,
    components: Vec<ComponentParams>,
}

impl NetworkParams {
    pub fn new(horizon: f64, components: Vec<ComponentParams>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(HawkesError::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let dim = components.len();
        for (k, c) in components.iter().enumerate() {
            if let Some(a) = c.horizon() {
                if a != horizon {
                    return Err(HawkesError::InvalidParameter(format!(
                        "component {k} uses horizon {a}, network uses {horizon}"
                    )));
                }
            }
            if let Some(l) = c.kernels().keys().find(|l| **l >= dim) {
                return Err(HawkesError::InvalidParameter(format!(
                    "component {k} references source {l} outside dimension {dim}"
                )));
            }
        }
        Ok(Self { horizon, components })
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &ComponentParams {
        &self.components[k]
    }

    pub fn nus(&self) -> Vec<f64> {
        self.components.iter().map(ComponentParams::nu).collect()
    }

    /// `ρ_{ℓk} = ∫ h_{ℓk}`.
    pub fn mass_matrix(&self) -> MassMatrix {
        let k = self.dimension();
        let mut m = DMatrix::zeros(k, k);
        for (target, c) in self.components.iter().enumerate() {
            for (source, kernel) in c.kernels() {
                m[(*source, target)] = kernel.mass();
            }
        }
        MassMatrix(m)
    }

    /// `Δ_{ℓk} = 1` iff `ρ_{ℓk} > 0`.
    pub fn adjacency(&self) -> DMatrix<u8> {
        self.mass_matrix().0.map(|x| u8::from(x > 0.0))
    }

    /// Per-target active sets `S(k)`.
    pub fn active_sets(&self) -> Vec<Vec<usize>> {
        self.components.iter().map(ComponentParams::active_set).collect()
    }

    pub fn max_sup_norm(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.kernels().values().map(Kernel::sup_norm))
            .fold(0.0, f64::max)
    }

    /// Every rate and kernel multiplied by `factor`.
    pub fn scaled_kernels(&self, factor: f64) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|c| {
                let kernels = c
                    .kernels()
                    .iter()
                    .map(|(l, k)| Ok((*l, k.scaled(factor)?)))
                    .collect::<Result<_>>()?;
                ComponentParams::new(c.nu(), kernels)
            })
            .collect::<Result<_>>()?;
        Self::new(self.horizon, comps)
    }
}

/// `λ^{(k)}_t = ν_k + Σ_{ℓ ∈ S(k)} Σ_{s ∈ N^ℓ ∩ [t-A, t)} h_{ℓk}(t - s)`.
///
/// The interval is open on the right, so an event at `t` does not
/// contribute to the intensity at `t`.
pub fn intensity_at(f_k: &ComponentParams, events: &EventData, t: f64) -> Result<f64> {
    let Some(a) = f_k.horizon() else {
        return Ok(f_k.nu());
    };
    if events.start() > t - a {
        return Err(HawkesError::MissingHistory {
            time: t,
            needed: t - a,
            available: events.start(),
        });
    }
    let mut rate = f_k.nu();
    for (source, kernel) in f_k.kernels() {
        if *source >= events.dimension() {
            continue;
        }
        for s in events.in_half_open(*source, t - a, t) {
            rate += kernel.eval(t - s);
        }
    }
    Ok(rate)
}

/// Nonnegative `K × K` matrix of kernel masses, indexed `(source, target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix(pub DMatrix<f64>);

impl MassMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(HawkesError::InvalidParameter("mass matrix must be square".into()));
        }
        if entries.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(HawkesError::InvalidParameter(
                "mass matrix entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| {
            rows[i].get(j).copied().unwrap_or(f64::NAN)
        }))
    }

    pub fn dimension(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, source: usize, target: usize) -> f64 {
        self.0[(source, target)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `(|||ρ|||_∞, |||ρ|||_1)`: maximum row sum and maximum column sum.
    pub fn operator_norms(&self) -> (f64, f64) {
        operator_norms(&self.0)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.0)
    }

    pub fn power(&self, n: u32) -> DMatrix<f64> {
        let k = self.dimension();
        let mut out = DMatrix::identity(k, k);
        for _ in 0..n {
            out = &out * &self.0;
        }
        out
    }
}

pub fn operator_norms(m: &DMatrix<f64>) -> (f64, f64) {
    let inf = m.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let one = m.column_iter().map(|c| c.sum()).fold(0.0, f64::max);
    (inf, one)
}

const POWER_ITERATION_CAP: usize = 100_000;
const POWER_ITERATION_TOL: f64 = 1e-12;

/// Spectral radius of a nonnegative square matrix.
///
/// The matrix is split into strongly connected blocks; on each irreducible
/// block `B` the power iteration runs on `I + B`, which is primitive, and
/// stops once the Collatz–Wielandt bounds `min (Mx)_i/x_i ≤ r ≤ max (Mx)_i/x_i`
/// agree to a relative `1e-12`.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(HawkesError::InvalidParameter("matrix must be square".into()));
    }
    if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(HawkesError::InvalidParameter(
            "spectral radius needs a finite nonnegative matrix".into(),
        ));
    }
    let mut radius: f64 = 0.0;
    for block in strongly_connected_components(m) {
        let r = if block.len() == 1 {
            m[(block[0], block[0])]
        } else {
            block_radius(m, &block)?
        };
        radius = radius.max(r);
    }
    Ok(radius)
}

fn block_radius(m: &DMatrix<f64>, block: &[usize]) -> Result<f64> {
    let n = block.len();
    let sub = DMatrix::from_fn(n, n, |i, j| m[(block[i], block[j])] + if i == j { 1.0 } else { 0.0 });
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let (mut lower, mut upper) = (0.0, f64::INFINITY);
    for _ in 0..POWER_ITERATION_CAP {
        let y = &sub * &x;
        lower = f64::INFINITY;
        upper = 0.0f64;
        for i in 0..n {
            let ratio = y[i] / x[i];
            lower = lower.min(ratio);
            upper = upper.max(ratio);
        }
        if upper - lower <= POWER_ITERATION_TOL * upper {
            return Ok((0.5 * (lower + upper) - 1.0).max(0.0));
        }
        let norm = y.sum();
        x = y / norm;
    }
    Err(HawkesError::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        lower: lower - 1.0,
        upper: upper - 1.0,
    })
}

/// Tarjan's algorithm on the graph with an edge `i → j` for `m[(i, j)] > 0`.
fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    // explicit call stack: (node, next neighbour to visit)
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut calls = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = calls.last_mut() {
            if *next < n {
                let w = *next;
                *next += 1;
                if m[(v, w)] <= 0.0 {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    calls.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                calls.pop();
                if let Some(&(parent, _)) = calls.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Stationary mean intensity `μ = (I - ρᵀ)^{-1} ν`.
pub fn stationary_mean(nu: &[f64], rho: &MassMatrix) -> Result<Vec<f64>> {
    let k = rho.dimension();
    if nu.len() != k {
        return Err(HawkesError::InvalidParameter(format!(
            "background vector has length {}, mass matrix dimension {k}",
            nu.len()
        )));
    }
    let radius = rho.spectral_radius()?;
    if radius >= 1.0 {
        return Err(HawkesError::NonStationary {
            spectral_radius: radius,
        });
    }
    let system = DMatrix::identity(k, k) - rho.0.transpose();
    let rhs = DVector::from_column_slice(nu);
    let mu = system.lu().solve(&rhs).ok_or(HawkesError::NonStationary {
        spectral_radius: radius,
    })?;
    Ok(mu.iter().copied().collect())
}

/// Bounds on the first moments of a stationary process whose mass matrix
/// satisfies `|||ρⁿ|||_∞ ≤ R_∞ cⁿ` and `|||ρⁿ|||_1 ≤ R_1 cⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentConstants {
    pub c: f64,
    pub r_inf: f64,
    pub r_one: f64,
    pub nu_max: f64,
    pub sup_kernel: f64,
    /// Bound on `E[λ_0]`.
    pub c0: f64,
    /// Bound on `E[λ_0²]`.
    pub c0_bar: f64,
    /// Largest `t` for which the exponential-moment bound holds.
    pub t_max: f64,
    /// `E[exp(t N[0,B))] ≤ exp(t γ B)` for `0 ≤ t ≤ t_max`.
    pub gamma: f64,
}

pub fn moment_constants(c: f64, r_inf: f64, r_one: f64, nu_max: f64, sup_kernel: f64) -> Result<MomentConstants> {
    if !(c > 0.0 && c < 1.0) {
        return Err(HawkesError::Domain(format!("c must lie in (0, 1), got {c}")));
    }
    for (name, v) in [("R_inf", r_inf), ("R_1", r_one), ("c_1", nu_max), ("h_bar", sup_kernel)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(HawkesError::Domain(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    let c0 = nu_max * (1.0 - c + r_one) / (1.0 - c);
    let c0_bar = c0 * c0 + c0 * sup_kernel * r_inf * r_one * c / (1.0 - c);
    let t_max = ((1.0 + c).ln() - (2.0 * c).ln()) / (1.0 + 2.0 * r_inf / (1.0 - c));
    let gamma = 2.0 * c0 * r_one / (1.0 - c);
    Ok(MomentConstants {
        c,
        r_inf,
        r_one,
        nu_max,
        sup_kernel,
        c0,
        c0_bar,
        t_max,
        gamma,
    })
}

/// `(R_∞, R_1) = max_{1 ≤ n ≤ max_power} (|||ρⁿ|||_∞, |||ρⁿ|||_1) / cⁿ`.
pub fn decay_certificate(rho: &MassMatrix, c: f64, max_power: u32) -> Result<(f64, f64)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(HawkesError::Domain(format!("c must lie in (0, 1), got {c}")));
    }
    let mut power = rho.0.clone();
    let (mut r_inf, mut r_one) = (0.0f64, 0.0f64);
    for n in 1..=max_power {
        let (inf, one) = operator_norms(&power);
        let scale = c.powi(n as i32);
        r_inf = r_inf.max(inf / scale);
        r_one = r_one.max(one / scale);
        power = &power * &rho.0;
    }
    Ok((r_inf, r_one))
}
