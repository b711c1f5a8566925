//! True networks for studies: random sparse generators, fixed reference
//! networks, and the stationarity certificates attached to them.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::config::{GeneratorSpec, ShapeSpec, TruthSpec};
use crate::error::{HawkesError, Result};
use crate::kernel::{HistogramKernel, Kernel, SplineKernel};
use crate::model::{decay_certificate, moment_constants, ComponentParams, MomentConstants, NetworkParams};
use crate::params_io::read_network;
use crate::rng::Seed;

/// Matrix powers used for the `(R_∞, R_1)` certificate.
pub const CERTIFICATE_POWERS: u32 = 30;
const RESCALE_ATTEMPTS: usize = 8;

/// A validated truth with its constants.
#[derive(Debug, Clone, Serialize)]
pub struct TruthReport {
    #[serde(skip)]
    pub params: NetworkParams,
    /// Largest `|S₀(k)|`.
    pub sparsity: usize,
    pub spectral_radius: f64,
    /// Factor applied to every kernel to reach the radius target (1 if none).
    pub rescale: f64,
    pub constants: MomentConstants,
}

/// Checks stationarity, finite positive backgrounds and bounded kernels,
/// and derives `c = (1 + SpR)/2`, `(R_∞, R_1)` from the first
/// [`CERTIFICATE_POWERS`] powers of `ρ`, and the moment constants.
pub fn certify(params: NetworkParams, rescale: f64) -> Result<TruthReport> {
    let rho = params.mass_matrix();
    let radius = rho.spectral_radius()?;
    if radius >= 1.0 {
        return Err(HawkesError::NonStationary {
            spectral_radius: radius,
        });
    }
    let nus = params.nus();
    if let Some(nu) = nus.iter().find(|nu| !(nu.is_finite() && **nu > 0.0)) {
        return Err(HawkesError::Generation(format!(
            "background rate {nu} is not positive and finite"
        )));
    }
    let sup = params.max_sup_norm();
    if !sup.is_finite() {
        return Err(HawkesError::Generation("unbounded kernel".into()));
    }
    let c = 0.5 * (1.0 + radius);
    let (r_inf, r_one) = decay_certificate(&rho, c, CERTIFICATE_POWERS)?;
    let nu_max = nus.iter().copied().fold(0.0, f64::max);
    let constants = moment_constants(c, r_inf, r_one, nu_max, sup)?;
    let sparsity = params.active_sets().iter().map(Vec::len).max().unwrap_or(0);
    Ok(TruthReport {
        params,
        sparsity,
        spectral_radius: radius,
        rescale,
        constants,
    })
}

/// Resolves a truth block into a certified network.
pub fn resolve_truth(spec: &TruthSpec, seed: Seed) -> Result<TruthReport> {
    match spec {
        TruthSpec::Generator(g) => generate_truth(g, seed),
        TruthSpec::File { path } => certify(read_network(path)?, 1.0),
        TruthSpec::Canonical { dimension } => canonical_truth(*dimension),
    }
}

fn shaped_kernel(shape: &ShapeSpec, horizon: f64, mass: f64) -> Result<Kernel> {
    let base: Kernel = match shape {
        ShapeSpec::Step { profile } => {
            let total: f64 = profile.iter().sum::<f64>() * horizon / profile.len() as f64;
            return Ok(HistogramKernel::new(horizon, profile.iter().map(|p| p * mass / total).collect())?.into());
        }
        ShapeSpec::Bump { order, coefficients } => {
            // log h <= max θ, so this shift keeps the base mass below 1
            let top = coefficients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let shift = top + horizon.ln() + 1.0;
            SplineKernel::new(horizon, *order, coefficients.iter().map(|c| c - shift).collect())?.into()
        }
    };
    base.scaled(mass / base.mass())
}

/// Draws a sparse network from `spec` and certifies it.
pub fn generate_truth(spec: &GeneratorSpec, seed: Seed) -> Result<TruthReport> {
    spec.validate()?;
    let k = spec.dimension;
    let mut rng = seed.stream(0);
    let mut comps = Vec::with_capacity(k);
    for _ in 0..k {
        let sources = sample(&mut rng, k, spec.sparsity).into_vec();
        let mut kernels = BTreeMap::new();
        for l in sources {
            let [lo, hi] = spec.mass_range;
            let mass = lo + (hi - lo) * rng.random::<f64>();
            kernels.insert(l, shaped_kernel(&spec.shape, spec.kernel_horizon, mass)?);
        }
        let [lo, hi] = spec.nu_range;
        let nu = lo + (hi - lo) * rng.random::<f64>();
        comps.push(ComponentParams::new(nu, kernels)?);
    }
    let mut params = NetworkParams::new(spec.kernel_horizon, comps)?;
    let mut rescale = 1.0;
    for _ in 0..RESCALE_ATTEMPTS {
        let radius = params.mass_matrix().spectral_radius()?;
        if radius <= spec.target_radius {
            return certify(params, rescale);
        }
        let factor = spec.target_radius / radius;
        params = params.scaled_kernels(factor)?;
        rescale *= factor;
    }
    let radius = params.mass_matrix().spectral_radius()?;
    if radius <= spec.target_radius {
        certify(params, rescale)
    } else {
        Err(HawkesError::Generation(format!(
            "spectral radius {radius} still above target {} after {RESCALE_ATTEMPTS} rescalings",
            spec.target_radius
        )))
    }
}

fn step(heights: &[f64]) -> Kernel {
    HistogramKernel::new(1.0, heights.to_vec())
        .expect("valid canonical kernel")
        .into()
}

/// Fixed reference networks with kernel support `[0, 1]`:
/// dimension 1 is `ν = 1`, `h = 0.5` on `[0, 1]` (`μ = 2`);
/// dimension 3 is a three-cycle with one self-excitation;
/// dimension 10 has `S₀(k) = {k, k+1 mod 10}` with masses 0.4 (`SpR = 0.8`).
pub fn canonical_truth(dimension: usize) -> Result<TruthReport> {
    let comps = match dimension {
        1 => vec![ComponentParams::new(1.0, BTreeMap::from([(0, step(&[0.5]))]))?],
        3 => vec![
            ComponentParams::new(0.5, BTreeMap::from([(2, step(&[0.4, 0.2]))]))?,
            ComponentParams::new(0.8, BTreeMap::from([(0, step(&[0.6, 0.2])), (1, step(&[0.2]))]))?,
            ComponentParams::new(0.3, BTreeMap::from([(1, step(&[0.1, 0.3, 0.2]))]))?,
        ],
        10 => (0..10)
            .map(|k| {
                ComponentParams::new(
                    0.5,
                    BTreeMap::from([(k, step(&[0.6, 0.2])), ((k + 1) % 10, step(&[0.6, 0.2]))]),
                )
            })
            .collect::<Result<_>>()?,
        _ => {
            return Err(HawkesError::Config(format!(
                "no canonical network of dimension {dimension}"
            )))
        }
    };
    certify(NetworkParams::new(1.0, comps)?, 1.0)
}
