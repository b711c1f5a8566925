//! Text formats for parameters: a TOML network file and JSON-lines draw
//! files. Floats are written in shortest round-trip form, so a write/read
//! cycle is exact.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernel::{HistogramKernel, Kernel, SplineKernel};
use crate::mcmc::PosteriorSample;
use crate::model::{ComponentParams, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Histogram,
    Spline,
}

/// One kernel `h_{ℓk}`: `heights` on the regular grid `iA/I` for a
/// histogram, `order` and `coefficients` for a log-spline on a uniform
/// knot grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRecord {
    pub source: usize,
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

impl KernelRecord {
    pub fn from_kernel(source: usize, kernel: &Kernel) -> Self {
        match kernel {
            Kernel::Histogram(h) => Self {
                source,
                kind: KernelKind::Histogram,
                heights: Some(h.heights().to_vec()),
                order: None,
                coefficients: None,
            },
            Kernel::Spline(s) => Self {
                source,
                kind: KernelKind::Spline,
                heights: None,
                order: Some(s.order()),
                coefficients: Some(s.coefficients().to_vec()),
            },
        }
    }

    pub fn to_kernel(&self, horizon: f64) -> Result<Kernel> {
        match (self.kind, &self.heights, self.order, &self.coefficients) {
            (KernelKind::Histogram, Some(h), None, None) => Ok(HistogramKernel::new(horizon, h.clone())?.into()),
            (KernelKind::Spline, None, Some(order), Some(c)) => {
                Ok(SplineKernel::new(horizon, order, c.clone())?.into())
            }
            _ => Err(HawkesError::Parse(format!(
                "kernel from source {} needs `heights` (histogram) or `order` and `coefficients` (spline) only",
                self.source
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRecord {
    pub nu: f64,
    #[serde(default)]
    pub kernel: Vec<KernelRecord>,
}

impl ComponentRecord {
    pub fn from_params(f_k: &ComponentParams) -> Self {
        Self {
            nu: f_k.nu(),
            kernel: f_k
                .kernels()
                .iter()
                .map(|(l, h)| KernelRecord::from_kernel(*l, h))
                .collect(),
        }
    }

    /// Kernels keep their given active set, even with zero mass.
    pub fn to_params(&self, horizon: f64) -> Result<ComponentParams> {
        let mut kernels = BTreeMap::new();
        for rec in &self.kernel {
            if kernels.insert(rec.source, rec.to_kernel(horizon)?).is_some() {
                return Err(HawkesError::Parse(format!("source {} listed twice", rec.source)));
            }
        }
        ComponentParams::with_active_set(self.nu, kernels)
    }
}

/// File form of [`NetworkParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    /// Number of components `K`.
    pub dimension: usize,
    /// Kernel support `A`.
    pub horizon: f64,
    #[serde(default)]
    pub component: Vec<ComponentRecord>,
}

impl NetworkRecord {
    pub fn from_params(f: &NetworkParams) -> Self {
        Self {
            dimension: f.dimension(),
            horizon: f.horizon(),
            component: f.components().iter().map(ComponentRecord::from_params).collect(),
        }
    }

    pub fn to_params(&self) -> Result<NetworkParams> {
        if self.component.len() != self.dimension {
            return Err(HawkesError::Parse(format!(
                "dimension is {} but {} components are listed",
                self.dimension,
                self.component.len()
            )));
        }
        let comps = self
            .component
            .iter()
            .map(|c| c.to_params(self.horizon))
            .collect::<Result<_>>()?;
        NetworkParams::new(self.horizon, comps)
    }
}

pub fn network_to_toml(f: &NetworkParams) -> Result<String> {
    toml::to_string(&NetworkRecord::from_params(f)).map_err(|e| HawkesError::Parse(e.to_string()))
}

pub fn network_from_toml(text: &str) -> Result<NetworkParams> {
    let rec: NetworkRecord = toml::from_str(text).map_err(|e| HawkesError::Parse(e.to_string()))?;
    rec.to_params()
}

pub fn read_network(path: &std::path::Path) -> Result<NetworkParams> {
    network_from_toml(&std::fs::read_to_string(path)?)
}

/// One line of a draw file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawRecord {
    pub index: usize,
    pub log_likelihood: f64,
    pub nu: f64,
    #[serde(default)]
    pub kernel: Vec<KernelRecord>,
}

/// Writes a header line, then one JSON object per retained draw.
pub fn write_draws<W: Write>(sample: &PosteriorSample, mut out: W) -> Result<()> {
    let header = serde_json::json!({
        "component": sample.component,
        "dimension": sample.dimension,
        "kernel_horizon": sample.kernel_horizon,
        "horizon": sample.horizon,
        "draws": sample.draws.len(),
    });
    writeln!(out, "{header}")?;
    for (i, (d, ll)) in sample.draws.iter().zip(&sample.log_likelihoods).enumerate() {
        let c = ComponentRecord::from_params(d);
        let rec = DrawRecord {
            index: i,
            log_likelihood: *ll,
            nu: c.nu,
            kernel: c.kernel,
        };
        let line = serde_json::to_string(&rec).map_err(|e| HawkesError::Parse(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Header of a draw file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawHeader {
    pub component: usize,
    pub dimension: usize,
    pub kernel_horizon: f64,
    pub horizon: f64,
    pub draws: usize,
}

pub fn read_draws<R: BufRead>(input: R) -> Result<(DrawHeader, Vec<ComponentParams>)> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| HawkesError::Parse("empty draw file".into()))??;
    let header: DrawHeader =
        serde_json::from_str(&first).map_err(|e| HawkesError::Parse(format!("draw header: {e}")))?;
    let mut draws = Vec::with_capacity(header.draws);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DrawRecord =
            serde_json::from_str(&line).map_err(|e| HawkesError::Parse(format!("draw line {}: {e}", n + 2)))?;
        let comp = ComponentRecord {
            nu: rec.nu,
            kernel: rec.kernel,
        };
        draws.push(comp.to_params(header.kernel_horizon)?);
    }
    if draws.len() != header.draws {
        return Err(HawkesError::Parse(format!(
            "draw file announces {} draws but holds {}",
            header.draws,
            draws.len()
        )));
    }
    Ok((header, draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn network() -> NetworkParams {
        let h: Kernel = HistogramKernel::new(1.5, vec![0.1, 1.0 / 3.0, 0.0]).unwrap().into();
        let s: Kernel = SplineKernel::new(1.5, 3, vec![-1.5, -1.0, -1.2, -1.4]).unwrap().into();
        NetworkParams::new(
            1.5,
            vec![
                ComponentParams::new(0.7, BTreeMap::from([(1, h)])).unwrap(),
                ComponentParams::new(std::f64::consts::PI, BTreeMap::from([(0, s)])).unwrap(),
                ComponentParams::background(1e-3).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let f = network();
        let text = network_to_toml(&f).unwrap();
        assert_eq!(network_from_toml(&text).unwrap(), f);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "dimension = 1\nhorizon = 1.0\n[[component]]\nnu = 1.0\nbogus = 2\n";
        assert!(network_from_toml(text).is_err());
        let text = "dimension = 1\nhorizon = 1.0\n[[component]]\nnu = 1.0\n[[component.kernel]]\nsource = 0\nkind = \"histogram\"\n";
        assert!(network_from_toml(text).is_err());
        let text = "dimension = 2\nhorizon = 1.0\n[[component]]\nnu = 1.0\n";
        assert!(network_from_toml(text).is_err());
    }

    #[test]
    fn hand_written_file() {
        let text = "dimension = 1\nhorizon = 2.0\n[[component]]\nnu = 0.5\n[[component.kernel]]\nsource = 0\nkind = \"histogram\"\nheights = [0.25, 0.125]\n";
        let f = network_from_toml(text).unwrap();
        assert_eq!(f.dimension(), 1);
        assert!((f.component(0).mass(0) - 0.375).abs() < 1e-15);
    }
}
