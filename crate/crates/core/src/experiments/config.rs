//! Study configuration, read from one TOML file. Unknown keys are errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::mcmc::McmcConfig;
use crate::priors::{KernelPriorSpec, NuPriorSpec, PriorSpec, SizePriorSpec};
use crate::two_step::ThresholdPolicy;

fn one() -> usize {
    1
}

/// Top-level study file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every random stream of the study derives from it.
    pub seed: u64,
    /// Observation horizons `T`, strictly increasing.
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorBlock>,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub study: StudyOptions,
    #[serde(default)]
    pub diagnose: DiagnoseOptions,
}

/// Where the true network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthSpec {
    Generator(GeneratorSpec),
    /// A network file in the TOML parameter format.
    File {
        path: PathBuf,
    },
    /// One of the fixed reference networks (dimension 1, 3 or 10).
    Canonical {
        dimension: usize,
    },
}

fn default_kernel_horizon() -> f64 {
    1.0
}

fn default_target_radius() -> f64 {
    0.8
}

/// Random sparse network: for every target `k`, `S₀(k)` is a uniform subset
/// of size `sparsity`, each kernel gets a mass uniform in `mass_range` and
/// the shape `shape`, and the mass matrix is shrunk if its spectral radius
/// exceeds `target_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub dimension: usize,
    pub sparsity: usize,
    pub mass_range: [f64; 2],
    pub nu_range: [f64; 2],
    #[serde(default = "default_kernel_horizon")]
    pub kernel_horizon: f64,
    #[serde(default = "default_target_radius")]
    pub target_radius: f64,
    pub shape: ShapeSpec,
}

/// Kernel profile, rescaled to the drawn mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// Piecewise constant on equal bins with relative heights `profile`.
    Step { profile: Vec<f64> },
    /// Smooth log-spline bump with the given order and coefficients.
    Bump { order: usize, coefficients: Vec<f64> },
}

/// Prior of every component; the kernel support is the truth's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    pub size: SizePriorSpec,
    pub kernel: KernelPriorSpec,
    pub nu: NuPriorSpec,
}

impl PriorBlock {
    pub fn resolve(&self, kernel_horizon: f64) -> PriorSpec {
        PriorSpec {
            horizon: kernel_horizon,
            size: self.size.clone(),
            kernel: self.kernel.clone(),
            nu: self.nu,
        }
    }
}

fn default_loss_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyOptions {
    /// Posterior draws (evenly spaced) used for the median losses.
    #[serde(default = "default_loss_draws")]
    pub loss_draws: usize,
    /// Horizons at which the conditional refit of the two-step procedure runs.
    pub refit_horizons: Vec<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            loss_draws: default_loss_draws(),
            refit_horizons: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseOptions {
    /// Dimensions of the canonical networks to check besides the config truth.
    pub canonical: Vec<usize>,
    /// Monte Carlo replicates of the moment checks.
    pub replicates: usize,
    /// Horizon of each moment-check path.
    pub horizon: f64,
    /// Window `B` of the exponential-moment check.
    pub mgf_window: f64,
    /// Horizons of the ergodic-deviation check, strictly increasing.
    pub ergodic_horizons: Vec<f64>,
    pub ergodic_replicates: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            canonical: Vec::new(),
            replicates: 200,
            horizon: 100.0,
            mgf_window: 1.0,
            ergodic_horizons: Vec::new(),
            ergodic_replicates: 50,
        }
    }
}

/// Prior and sampler settings for a single fit, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Number of components `K` of the observed process.
    pub dimension: usize,
    pub prior: PriorSpec,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
}

impl FitConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HawkesError::Config(e.to_string()))?;
        config.mcmc.validate()?;
        if config.dimension == 0 {
            return Err(HawkesError::Config("dimension must be at least 1".into()));
        }
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn strictly_increasing(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(HawkesError::Config(format!("{name} must be positive and finite")));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HawkesError::Config(format!(
            "{name} must be strictly increasing, got {xs:?}"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HawkesError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The configuration with every default filled in.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HawkesError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        strictly_increasing("horizons", &self.horizons)?;
        if self.replicates == 0 {
            return Err(HawkesError::Config("replicates must be at least 1".into()));
        }
        self.mcmc.validate()?;
        if let Some(TruthSpec::Generator(g)) = &self.truth {
            g.validate()?;
        }
        if let Some(TruthSpec::Canonical { dimension }) = &self.truth {
            if ![1, 3, 10].contains(dimension) {
                return Err(HawkesError::Config(format!(
                    "no canonical network of dimension {dimension}"
                )));
            }
        }
        for t in &self.study.refit_horizons {
            if !self.horizons.contains(t) {
                return Err(HawkesError::Config(format!(
                    "refit horizon {t} is not in the horizon grid"
                )));
            }
        }
        if self.study.loss_draws == 0 {
            return Err(HawkesError::Config("loss_draws must be at least 1".into()));
        }
        let d = &self.diagnose;
        if let Some(k) = d.canonical.iter().find(|k| ![1, 3, 10].contains(*k)) {
            return Err(HawkesError::Config(format!("no canonical network of dimension {k}")));
        }
        strictly_increasing("diagnose.ergodic_horizons", &d.ergodic_horizons)?;
        if !(d.horizon > 0.0 && d.mgf_window > 0.0 && d.mgf_window <= d.horizon) {
            return Err(HawkesError::Config("diagnose needs 0 < mgf_window <= horizon".into()));
        }
        Ok(())
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.sparsity > self.dimension {
            return Err(HawkesError::Config(format!(
                "generator needs 1 <= K and sparsity <= K (K={}, s0={})",
                self.dimension, self.sparsity
            )));
        }
        let [lo, hi] = self.mass_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(HawkesError::Config(format!(
                "mass range must satisfy 0 < lo <= hi < 1, got {lo}..{hi}"
            )));
        }
        let [lo, hi] = self.nu_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(HawkesError::Config(format!(
                "background range must satisfy 0 < lo <= hi, got {lo}..{hi}"
            )));
        }
        if !(self.kernel_horizon > 0.0 && self.kernel_horizon.is_finite()) {
            return Err(HawkesError::Config("kernel_horizon must be positive".into()));
        }
        if !(self.target_radius > 0.0 && self.target_radius < 1.0) {
            return Err(HawkesError::Config(format!(
                "target spectral radius must lie in (0, 1), got {}",
                self.target_radius
            )));
        }
        match &self.shape {
            ShapeSpec::Step { profile } => {
                if profile.is_empty() || profile.iter().any(|x| !(*x >= 0.0)) || profile.iter().sum::<f64>() <= 0.0 {
                    return Err(HawkesError::Config(
                        "step profile needs nonnegative heights with positive sum".into(),
                    ));
                }
            }
            ShapeSpec::Bump { order, coefficients } => {
                if coefficients.len() < *order {
                    return Err(HawkesError::Config("bump needs at least `order` coefficients".into()));
                }
            }
        }
        Ok(())
    }
}
