//! Reversible-jump Metropolis–Hastings sampler for the posterior of one
//! component, `Π_k(f_k | N) ∝ exp(L_{T,k}(f_k)) π_k(f_k)`.
//!
//! Histogram kernels are moved in their Dirichlet weight coordinates
//! `(w_1, ..., w_{I+1})`; log-spline kernels in their coefficients. The
//! chain keeps the excitation `Σ_ℓ h_{ℓk}(t - s)` at every event of `k`
//! cached per active source, so a move touching one kernel only revisits
//! the events that kernel can reach.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::kernel::{HistogramKernel, Kernel, SplineKernel};
use crate::likelihood::{self, neumaier_sum};
use crate::model::ComponentParams;
use crate::priors::{self, KernelPriorSpec, Priors};
use crate::rng::{Seed, StreamRng};

/// Number of points of the kernel evaluation grid used by [`summarize`].
pub const GRID_POINTS: usize = 256;

const ADAPT_WINDOW: u64 = 50;
const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 10.0;

/// Kinds of proposal, in the order used by [`MoveProbabilities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MoveKind {
    Nu,
    Heights,
    Bins,
    AddEdge,
    RemoveEdge,
    SwapEdge,
}

impl MoveKind {
    pub const ALL: [MoveKind; 6] = [
        MoveKind::Nu,
        MoveKind::Heights,
        MoveKind::Bins,
        MoveKind::AddEdge,
        MoveKind::RemoveEdge,
        MoveKind::SwapEdge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Nu => "nu",
            MoveKind::Heights => "heights",
            MoveKind::Bins => "bins",
            MoveKind::AddEdge => "add_edge",
            MoveKind::RemoveEdge => "remove_edge",
            MoveKind::SwapEdge => "swap_edge",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoveProbabilities {
    pub nu: f64,
    pub heights: f64,
    pub bins: f64,
    pub add_edge: f64,
    pub remove_edge: f64,
    pub swap_edge: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self {
            nu: 0.2,
            heights: 0.3,
            bins: 0.2,
            add_edge: 0.1,
            remove_edge: 0.1,
            swap_edge: 0.1,
        }
    }
}

impl MoveProbabilities {
    pub fn get(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Nu => self.nu,
            MoveKind::Heights => self.heights,
            MoveKind::Bins => self.bins,
            MoveKind::AddEdge => self.add_edge,
            MoveKind::RemoveEdge => self.remove_edge,
            MoveKind::SwapEdge => self.swap_edge,
        }
    }

    /// The same mix with edge moves switched off and the rest rescaled.
    pub fn without_edges(&self) -> Self {
        let total = self.nu + self.heights + self.bins;
        Self {
            nu: self.nu / total,
            heights: self.heights / total,
            bins: self.bins / total,
            add_edge: 0.0,
            remove_edge: 0.0,
            swap_edge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub moves: MoveProbabilities,
    /// Initial standard deviation of the log-scale walk on `ν`.
    pub nu_scale: f64,
    /// Initial scale of the logistic-normal (or coefficient) walk on kernels.
    pub kernel_scale: f64,
    /// Tune the scales during burn-in.
    pub adapt: bool,
    /// Compare the cached log-likelihood with a full recomputation every
    /// this many iterations (0 disables the audit).
    pub audit_every: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            burn_in: 20_000,
            thin: 10,
            moves: MoveProbabilities::default(),
            nu_scale: 0.3,
            kernel_scale: 0.3,
            adapt: true,
            audit_every: 1_000,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.moves;
        let probs = MoveKind::ALL.map(|m| p.get(m));
        if probs.iter().any(|x| !(*x >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(HawkesError::Config(format!(
                "move probabilities must be nonnegative and sum to 1, got {probs:?}"
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(HawkesError::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(HawkesError::Config("thinning must be at least 1".into()));
        }
        if !(self.nu_scale >= 0.0 && self.kernel_scale >= 0.0) {
            return Err(HawkesError::Config("proposal scales must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Proposal and acceptance counts for one move kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
    /// Proposals that were impossible (e.g. merge at one bin) and counted
    /// as rejections.
    pub skipped: u64,
}

impl MoveStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub moves: BTreeMap<String, MoveStats>,
    pub audits: usize,
    /// Largest relative gap `|cached - fresh| / max(1, |fresh|)` seen at an audit.
    pub max_audit_delta: f64,
    pub final_nu_scale: f64,
    pub final_kernel_scale: f64,
}

/// Thinned post-burn-in draws of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub component: usize,
    pub dimension: usize,
    /// Kernel support `A`.
    pub kernel_horizon: f64,
    /// Observation horizon `T`.
    pub horizon: f64,
    pub draws: Vec<ComponentParams>,
    pub log_likelihoods: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

/// Lags `t - s` from the events `s` of one source to the events `t` of
/// component `k`, plus the pieces of the compensator this source feeds.
#[derive(Debug, Clone)]
struct SourceData {
    /// Indices of the events of `k` reachable from this source.
    rows: Vec<u32>,
    offsets: Vec<u32>,
    lags: Vec<f64>,
    /// Source events whose whole kernel support lies in `[0, T]`.
    full: usize,
    /// Partial integration windows `(lo, hi)` for the other source events.
    partial: Vec<(f64, f64)>,
}

impl SourceData {
    fn build(source: &[f64], targets: &[f64], kernel_horizon: f64, horizon: f64) -> Self {
        let mut rows = Vec::new();
        let mut offsets = vec![0u32];
        let mut lags = Vec::new();
        for (e, t) in targets.iter().enumerate() {
            let lo = source.partition_point(|s| *s < t - kernel_horizon);
            let hi = source.partition_point(|s| s < t);
            if hi > lo {
                rows.push(e as u32);
                lags.extend(source[lo..hi].iter().map(|s| t - s));
                offsets.push(lags.len() as u32);
            }
        }
        let mut full = 0;
        let mut partial = Vec::new();
        let first = source.partition_point(|s| *s < -kernel_horizon);
        let last = source.partition_point(|s| *s < horizon);
        for s in &source[first..last] {
            let lo = (-s).max(0.0);
            let hi = (horizon - s).min(kernel_horizon);
            if lo == 0.0 && hi == kernel_horizon {
                full += 1;
            } else if hi > lo {
                partial.push((lo, hi));
            }
        }
        Self {
            rows,
            offsets,
            lags,
            full,
            partial,
        }
    }

    fn excitation(&self, kernel: &Kernel) -> Vec<f64> {
        let rows = self
            .offsets
            .windows(2)
            .map(|w| &self.lags[w[0] as usize..w[1] as usize]);
        match kernel {
            Kernel::Histogram(h) => rows.map(|lags| lags.iter().map(|x| h.eval(*x)).sum()).collect(),
            Kernel::Spline(s) => rows.map(|lags| lags.iter().map(|x| s.eval(*x)).sum()).collect(),
        }
    }

    fn compensator(&self, kernel: &Kernel) -> f64 {
        let mut total = self.full as f64 * kernel.mass();
        for (lo, hi) in &self.partial {
            total += kernel.integral(*lo, *hi);
        }
        total
    }
}

/// Chain coordinates of one kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelCoords {
    /// Dirichlet weights, `w[0]` being the leftover mass.
    Weights(Vec<f64>),
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Edge {
    coords: KernelCoords,
    kernel: Kernel,
    /// Excitation at each reachable event, aligned with `SourceData::rows`.
    excitation: Vec<f64>,
    compensator: f64,
}

/// A proposal evaluated against the current state, ready to be committed.
#[derive(Debug, Clone)]
pub struct Proposal {
    /// Log of the Metropolis–Hastings–Green acceptance ratio.
    pub log_ratio: f64,
    nu: Option<f64>,
    edges: Vec<(usize, Option<Edge>)>,
    delta_log_sum: f64,
    new_excitation: Vec<(u32, f64)>,
}

impl Proposal {
    fn impossible() -> Self {
        Self {
            log_ratio: f64::NEG_INFINITY,
            nu: None,
            edges: Vec::new(),
            delta_log_sum: 0.0,
            new_excitation: Vec::new(),
        }
    }

    /// `min(1, exp(log_ratio))`.
    pub fn acceptance_probability(&self) -> f64 {
        if self.log_ratio >= 0.0 {
            1.0
        } else {
            self.log_ratio.exp()
        }
    }
}

/// Outcome of one move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
    pub skipped: bool,
    pub acceptance_probability: f64,
}

/// State of one chain with its likelihood caches.
pub struct Chain<'a> {
    k: usize,
    events: &'a EventData,
    horizon: f64,
    priors: &'a Priors,
    config: McmcConfig,
    moves: MoveProbabilities,
    fixed_graph: bool,
    targets: Vec<f64>,
    sources: Vec<Option<SourceData>>,
    nu: f64,
    edges: BTreeMap<usize, Edge>,
    excitation: Vec<f64>,
    log_sum: f64,
    scratch: Vec<f64>,
    touched: Vec<bool>,
    rng: StreamRng,
    stats: [MoveStats; 6],
    window: [(u64, u64); 6],
    nu_scale: f64,
    kernel_scale: f64,
    iteration: usize,
    audits: usize,
    max_audit_delta: f64,
}

impl<'a> Chain<'a> {
    /// Chain started at `ν = N^k[0,T] / T` (the prior mean when that is
    /// zero) with no active source.
    pub fn new(
        k: usize,
        events: &'a EventData,
        horizon: f64,
        priors: &'a Priors,
        config: &McmcConfig,
        seed: Seed,
    ) -> Result<Self> {
        let n = if k < events.dimension() {
            events.count(k, 0.0, horizon)
        } else {
            0
        };
        let nu = if horizon > 0.0 && n > 0 {
            n as f64 / horizon
        } else {
            priors.spec().nu.mean()
        };
        Self::from_state(
            k,
            events,
            horizon,
            priors,
            config,
            seed,
            &ComponentParams::background(nu)?,
            false,
        )
    }

    /// Chain started at `initial`; with `fixed_graph` the active set never
    /// changes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        k: usize,
        events: &'a EventData,
        horizon: f64,
        priors: &'a Priors,
        config: &McmcConfig,
        seed: Seed,
        initial: &ComponentParams,
        fixed_graph: bool,
    ) -> Result<Self> {
        config.validate()?;
        let a = priors.horizon();
        if events.dimension() != priors.dimension() {
            return Err(HawkesError::InvalidParameter(format!(
                "events have {} components but the prior expects {}",
                events.dimension(),
                priors.dimension()
            )));
        }
        if k >= priors.dimension() {
            return Err(HawkesError::InvalidParameter(format!("component {k} out of range")));
        }
        if events.start() > -a {
            return Err(HawkesError::MissingHistory {
                time: 0.0,
                needed: -a,
                available: events.start(),
            });
        }
        if events.end() < horizon || horizon < 0.0 {
            return Err(HawkesError::InvalidParameter(format!(
                "events end at {}, before the horizon {horizon}",
                events.end()
            )));
        }
        let targets = events.in_closed(k, 0.0, horizon).to_vec();
        let n = targets.len();
        let moves = if fixed_graph {
            config.moves.without_edges()
        } else {
            config.moves
        };
        let mut chain = Self {
            k,
            events,
            horizon,
            priors,
            config: config.clone(),
            moves,
            fixed_graph,
            sources: vec![None; priors.dimension()],
            targets,
            nu: initial.nu(),
            edges: BTreeMap::new(),
            excitation: vec![0.0; n],
            log_sum: 0.0,
            scratch: vec![0.0; n],
            touched: vec![false; n],
            rng: seed.stream(k as u64),
            stats: [MoveStats::default(); 6],
            window: [(0, 0); 6],
            nu_scale: config.nu_scale,
            kernel_scale: config.kernel_scale,
            iteration: 0,
            audits: 0,
            max_audit_delta: 0.0,
        };
        for (l, kernel) in initial.kernels() {
            if kernel.horizon() != a {
                return Err(HawkesError::InvalidParameter(format!(
                    "kernel horizon {} differs from the prior's {a}",
                    kernel.horizon()
                )));
            }
            let coords = match kernel {
                Kernel::Histogram(h) => KernelCoords::Weights(h.weights()),
                Kernel::Spline(s) => KernelCoords::Coefficients(s.coefficients().to_vec()),
            };
            let edge = chain.make_edge(*l, coords, kernel.clone());
            chain.edges.insert(*l, edge);
        }
        chain.resync();
        let ll = chain.log_likelihood();
        if !ll.is_finite() || !chain.log_prior().is_finite() {
            return Err(HawkesError::Initialization(format!(
                "initial state has log-likelihood {ll} and log-prior {}",
                chain.log_prior()
            )));
        }
        Ok(chain)
    }

    pub fn component(&self) -> usize {
        self.k
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.edges.keys().copied().collect()
    }

    pub fn coords(&self, source: usize) -> Option<&KernelCoords> {
        self.edges.get(&source).map(|e| &e.coords)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn stats(&self, kind: MoveKind) -> MoveStats {
        self.stats[kind.index()]
    }

    /// Current parameters; every active source is kept, even with tiny mass.
    pub fn params(&self) -> ComponentParams {
        ComponentParams::with_active_set(
            self.nu,
            self.edges.iter().map(|(l, e)| (*l, e.kernel.clone())).collect(),
        )
        .expect("chain states are valid parameters")
    }

    /// Cached `L_{T,k}` of the current state.
    pub fn log_likelihood(&self) -> f64 {
        self.log_sum - self.nu * self.horizon - self.kernel_compensator()
    }

    /// Log prior density of the current state (heights coordinates).
    pub fn log_prior(&self) -> f64 {
        if self.fixed_graph {
            let kernels: f64 = self
                .edges
                .values()
                .map(|e| self.priors.log_kernel_density(&e.kernel))
                .sum();
            kernels + self.priors.log_nu_density(self.nu)
        } else {
            priors::log_prior_density(self.priors, &self.params())
        }
    }

    fn kernel_compensator(&self) -> f64 {
        neumaier_sum(self.edges.values().map(|e| e.compensator))
    }

    fn source(&mut self, l: usize) -> &SourceData {
        if self.sources[l].is_none() {
            let data = SourceData::build(self.events.times(l), &self.targets, self.priors.horizon(), self.horizon);
            self.sources[l] = Some(data);
        }
        self.sources[l].as_ref().expect("just built")
    }

    fn make_edge(&mut self, l: usize, coords: KernelCoords, kernel: Kernel) -> Edge {
        let src = self.source(l);
        Edge {
            excitation: src.excitation(&kernel),
            compensator: src.compensator(&kernel),
            coords,
            kernel,
        }
    }

    /// Recomputes the event caches from the per-source excitations.
    fn resync(&mut self) {
        self.excitation.iter_mut().for_each(|g| *g = 0.0);
        for (l, edge) in &self.edges {
            let src = self.sources[*l].as_ref().expect("active sources are built");
            for (r, e) in src.rows.iter().enumerate() {
                self.excitation[*e as usize] += edge.excitation[r];
            }
        }
        let nu = self.nu;
        self.log_sum = neumaier_sum(self.excitation.iter().map(|g| (nu + g).ln()));
    }

    /// Evaluates replacing the kernels of the listed sources (`None` removes
    /// the source). Returns the change in log-likelihood.
    fn evaluate_edges(&mut self, changes: Vec<(usize, Option<Edge>)>) -> (f64, Proposal) {
        let mut touched_list: Vec<u32> = Vec::new();
        let mut delta_comp = 0.0;
        for (l, new) in &changes {
            let src = self.sources[*l].as_ref().expect("sources of proposals are built");
            let old = self.edges.get(l);
            delta_comp += new.as_ref().map_or(0.0, |e| e.compensator) - old.map_or(0.0, |e| e.compensator);
            for (r, e) in src.rows.iter().enumerate() {
                let d = new.as_ref().map_or(0.0, |x| x.excitation[r]) - old.map_or(0.0, |x| x.excitation[r]);
                let i = *e as usize;
                if !self.touched[i] {
                    self.touched[i] = true;
                    self.scratch[i] = 0.0;
                    touched_list.push(*e);
                }
                self.scratch[i] += d;
            }
        }
        let mut new_excitation = Vec::with_capacity(touched_list.len());
        let nu = self.nu;
        let delta_log_sum = sum_log_ratios(touched_list.into_iter().map(|e| {
            let i = e as usize;
            self.touched[i] = false;
            let old = self.excitation[i];
            let g = (old + self.scratch[i]).max(0.0);
            new_excitation.push((e, g));
            (nu + g, nu + old)
        }));
        let proposal = Proposal {
            log_ratio: 0.0,
            nu: None,
            edges: changes,
            delta_log_sum,
            new_excitation,
        };
        (delta_log_sum - delta_comp, proposal)
    }

    fn build_kernel(&self, coords: &KernelCoords) -> Option<Kernel> {
        let a = self.priors.horizon();
        match coords {
            KernelCoords::Weights(w) => {
                if w.iter().any(|x| !(*x > 0.0)) {
                    return None;
                }
                let h = HistogramKernel::from_weights(a, w).ok()?;
                (!self.priors.exceeds_sup_cap(&h)).then(|| h.into())
            }
            KernelCoords::Coefficients(theta) => {
                let KernelPriorSpec::Spline(s) = &self.priors.spec().kernel else {
                    return None;
                };
                SplineKernel::new(a, s.order, theta.clone()).ok().map(Kernel::from)
            }
        }
    }

    /// Log prior of a kernel in chain coordinates given its count
    /// (Dirichlet density of the weights, or Gaussian coefficients), without
    /// the truncation constant.
    fn log_coords_density(&self, coords: &KernelCoords) -> f64 {
        match coords {
            KernelCoords::Weights(w) => self.priors.log_weight_density(w),
            KernelCoords::Coefficients(t) => self.priors.log_coefficient_density(t),
        }
    }

    fn coords_count(coords: &KernelCoords) -> usize {
        match coords {
            KernelCoords::Weights(w) => w.len() - 1,
            KernelCoords::Coefficients(t) => t.len(),
        }
    }

    /// Proposal `ν → ν_new`; the ratio includes the Jacobian of a log-scale walk.
    pub fn propose_nu(&mut self, nu_new: f64) -> Proposal {
        if !(nu_new > 0.0 && nu_new.is_finite()) {
            return Proposal::impossible();
        }
        let nu = self.nu;
        let delta_log_sum = sum_log_ratios(self.excitation.iter().map(|g| (nu_new + g, nu + g)));
        let delta_ll = delta_log_sum - (nu_new - self.nu) * self.horizon;
        let log_ratio = delta_ll + self.priors.log_nu_density(nu_new) - self.priors.log_nu_density(self.nu)
            + nu_new.ln()
            - self.nu.ln();
        Proposal {
            log_ratio,
            nu: Some(nu_new),
            edges: Vec::new(),
            delta_log_sum,
            new_excitation: Vec::new(),
        }
    }

    /// Within-model proposal replacing the coordinates of source `l`
    /// (same bin or coefficient count). For weights the proposal is taken
    /// to be a symmetric walk in additive log-ratio coordinates, whose
    /// Jacobian `Π w_j` enters the ratio.
    pub fn propose_kernel(&mut self, l: usize, coords: KernelCoords) -> Proposal {
        let Some(old) = self.edges.get(&l) else {
            return Proposal::impossible();
        };
        if Self::coords_count(&old.coords) != Self::coords_count(&coords) {
            return Proposal::impossible();
        }
        let old_term = self.log_coords_density(&old.coords) + log_jacobian(&old.coords);
        let Some(kernel) = self.build_kernel(&coords) else {
            return Proposal::impossible();
        };
        let new_term = self.log_coords_density(&coords) + log_jacobian(&coords);
        let edge = self.make_edge(l, coords, kernel);
        let (delta_ll, mut p) = self.evaluate_edges(vec![(l, Some(edge))]);
        p.log_ratio = delta_ll + new_term - old_term;
        p
    }

    /// Split bin `bin` (0-based among the `I` bins) of source `l` into two
    /// with fractions `u` and `1 - u`.
    pub fn propose_split(&mut self, l: usize, bin: usize, u: f64) -> Proposal {
        let Some(KernelCoords::Weights(w)) = self.edges.get(&l).map(|e| &e.coords) else {
            return Proposal::impossible();
        };
        let bins = w.len() - 1;
        if bin >= bins || bins >= self.priors.count_range().1 || !(u > 0.0 && u < 1.0) {
            return Proposal::impossible();
        }
        let wb = w[bin + 1];
        let mut split = Vec::with_capacity(w.len() + 1);
        split.extend_from_slice(&w[..=bin]);
        split.push(u * wb);
        split.push((1.0 - u) * wb);
        split.extend_from_slice(&w[bin + 2..]);
        // choosing the bin (1/I) and the matching adjacent pair (1/I) cancel
        self.propose_count_change(l, KernelCoords::Weights(split), wb.ln())
    }

    /// Merge bins `bin` and `bin + 1` (0-based) of source `l`.
    pub fn propose_merge(&mut self, l: usize, bin: usize) -> Proposal {
        let Some(KernelCoords::Weights(w)) = self.edges.get(&l).map(|e| &e.coords) else {
            return Proposal::impossible();
        };
        let bins = w.len() - 1;
        if bins < 2 || bin + 1 >= bins {
            return Proposal::impossible();
        }
        let merged_weight = w[bin + 1] + w[bin + 2];
        let mut merged = Vec::with_capacity(w.len() - 1);
        merged.extend_from_slice(&w[..=bin]);
        merged.push(merged_weight);
        merged.extend_from_slice(&w[bin + 3..]);
        self.propose_count_change(l, KernelCoords::Weights(merged), -merged_weight.ln())
    }

    /// Replace the coefficients of spline source `l` by a fresh vector with
    /// a different length drawn from the truncated coefficient prior.
    pub fn propose_coefficients(&mut self, l: usize, theta: Vec<f64>) -> Proposal {
        if !matches!(
            self.edges.get(&l).map(|e| &e.coords),
            Some(KernelCoords::Coefficients(_))
        ) {
            return Proposal::impossible();
        }
        let coords = KernelCoords::Coefficients(theta);
        let new_count = Self::coords_count(&coords);
        let old_count = Self::coords_count(&self.edges[&l].coords);
        let Some(kernel) = self.build_kernel(&coords) else {
            return Proposal::impossible();
        };
        let edge = self.make_edge(l, coords, kernel);
        let (delta_ll, mut p) = self.evaluate_edges(vec![(l, Some(edge))]);
        // the coefficient densities cancel against the proposal
        p.log_ratio = delta_ll + self.priors.count_log_pmf(new_count) - self.priors.count_log_pmf(old_count);
        p
    }

    fn propose_count_change(&mut self, l: usize, coords: KernelCoords, log_jacobian: f64) -> Proposal {
        let old = &self.edges[&l].coords;
        let old_count = Self::coords_count(old);
        let new_count = Self::coords_count(&coords);
        let old_term =
            self.priors.count_log_pmf(old_count) + self.log_coords_density(old) - self.priors.log_truncation(old_count);
        let Some(kernel) = self.build_kernel(&coords) else {
            return Proposal::impossible();
        };
        let new_term = self.priors.count_log_pmf(new_count) + self.log_coords_density(&coords)
            - self.priors.log_truncation(new_count);
        let edge = self.make_edge(l, coords, kernel);
        let (delta_ll, mut p) = self.evaluate_edges(vec![(l, Some(edge))]);
        p.log_ratio = delta_ll + new_term - old_term + log_jacobian;
        p
    }

    /// Add source `l` with kernel `kernel` drawn from the kernel prior.
    pub fn propose_add(&mut self, l: usize, kernel: Kernel) -> Proposal {
        let s = self.edges.len();
        if self.fixed_graph
            || self.edges.contains_key(&l)
            || l >= self.priors.dimension()
            || s >= self.priors.size_cap()
        {
            return Proposal::impossible();
        }
        let coords = kernel_coords(&kernel);
        let edge = self.make_edge(l, coords, kernel);
        let (delta_ll, mut p) = self.evaluate_edges(vec![(l, Some(edge))]);
        p.log_ratio = edge_add_log_ratio(delta_ll, s, self.priors, &self.moves);
        p
    }

    /// Remove source `l`.
    pub fn propose_remove(&mut self, l: usize) -> Proposal {
        let s = self.edges.len();
        if self.fixed_graph || !self.edges.contains_key(&l) {
            return Proposal::impossible();
        }
        let (delta_ll, mut p) = self.evaluate_edges(vec![(l, None)]);
        p.log_ratio = edge_remove_log_ratio(delta_ll, s, self.priors, &self.moves);
        p
    }

    /// Remove source `out` and add source `into` with a kernel drawn from
    /// the kernel prior; the graph size is unchanged, so only the
    /// likelihood ratio remains.
    pub fn propose_swap(&mut self, out: usize, into: usize, kernel: Kernel) -> Proposal {
        if self.fixed_graph
            || !self.edges.contains_key(&out)
            || self.edges.contains_key(&into)
            || into >= self.priors.dimension()
        {
            return Proposal::impossible();
        }
        let coords = kernel_coords(&kernel);
        let edge = self.make_edge(into, coords, kernel);
        let (delta_ll, mut p) = self.evaluate_edges(vec![(out, None), (into, Some(edge))]);
        p.log_ratio = delta_ll;
        p
    }

    /// Applies an evaluated proposal.
    pub fn commit(&mut self, p: Proposal) {
        if let Some(nu) = p.nu {
            self.nu = nu;
            self.log_sum += p.delta_log_sum;
            return;
        }
        for (e, g) in p.new_excitation {
            self.excitation[e as usize] = g;
        }
        self.log_sum += p.delta_log_sum;
        for (l, edge) in p.edges {
            match edge {
                Some(edge) => {
                    self.edges.insert(l, edge);
                }
                None => {
                    self.edges.remove(&l);
                }
            }
        }
    }

    fn decide(&mut self, kind: MoveKind, p: Proposal) -> MoveOutcome {
        let skipped = p.log_ratio == f64::NEG_INFINITY && p.nu.is_none() && p.edges.is_empty();
        let prob = p.acceptance_probability();
        let accepted = !skipped && self.rng.random::<f64>() < prob;
        let st = &mut self.stats[kind.index()];
        st.proposed += 1;
        if skipped {
            st.skipped += 1;
        }
        let w = &mut self.window[kind.index()];
        w.0 += 1;
        if accepted {
            st.accepted += 1;
            w.1 += 1;
            self.commit(p);
        }
        MoveOutcome {
            kind,
            accepted,
            skipped,
            acceptance_probability: if skipped { 0.0 } else { prob },
        }
    }

    fn skip(&mut self, kind: MoveKind) -> MoveOutcome {
        self.decide(kind, Proposal::impossible())
    }

    fn random_active(&mut self) -> Option<usize> {
        if self.edges.is_empty() {
            return None;
        }
        let i = self.rng.random_range(0..self.edges.len());
        self.edges.keys().nth(i).copied()
    }

    fn random_inactive(&mut self) -> Option<usize> {
        let k = self.priors.dimension();
        let free = k - self.edges.len();
        if free == 0 {
            return None;
        }
        let mut i = self.rng.random_range(0..free);
        for l in 0..k {
            if !self.edges.contains_key(&l) {
                if i == 0 {
                    return Some(l);
                }
                i -= 1;
            }
        }
        None
    }

    pub fn move_update_nu(&mut self) -> MoveOutcome {
        let z = priors::standard_normal(&mut self.rng);
        let nu_new = self.nu * (self.nu_scale * z).exp();
        let p = self.propose_nu(nu_new);
        self.decide(MoveKind::Nu, p)
    }

    /// Logistic-normal walk on the weights (or Gaussian walk on the
    /// coefficients) of source `l`.
    pub fn move_update_heights(&mut self, l: usize) -> MoveOutcome {
        let Some(coords) = self.edges.get(&l).map(|e| e.coords.clone()) else {
            return self.skip(MoveKind::Heights);
        };
        let scale = self.kernel_scale;
        let coords = match coords {
            KernelCoords::Weights(w) => {
                let y: Vec<f64> = w
                    .iter()
                    .map(|x| x.ln() + scale * priors::standard_normal(&mut self.rng))
                    .collect();
                KernelCoords::Weights(softmax(&y))
            }
            KernelCoords::Coefficients(t) => KernelCoords::Coefficients(
                t.iter()
                    .map(|x| x + scale * priors::standard_normal(&mut self.rng))
                    .collect(),
            ),
        };
        let p = self.propose_kernel(l, coords);
        self.decide(MoveKind::Heights, p)
    }

    /// Split or merge (histograms) or change the coefficient count (splines)
    /// of source `l`, each direction with probability 1/2.
    pub fn move_change_bins(&mut self, l: usize) -> Result<MoveOutcome> {
        let Some(coords) = self.edges.get(&l).map(|e| e.coords.clone()) else {
            return Ok(self.skip(MoveKind::Bins));
        };
        let up = self.rng.random::<bool>();
        let p = match coords {
            KernelCoords::Weights(w) => {
                let bins = w.len() - 1;
                if up {
                    let bin = self.rng.random_range(0..bins);
                    let u = 1.0 - self.rng.random::<f64>();
                    self.propose_split(l, bin, u)
                } else if bins >= 2 {
                    let bin = self.rng.random_range(0..bins - 1);
                    self.propose_merge(l, bin)
                } else {
                    Proposal::impossible()
                }
            }
            KernelCoords::Coefficients(t) => {
                let (lo, hi) = self.priors.count_range();
                let j = t.len();
                let target = if up { j + 1 } else { j.wrapping_sub(1) };
                if target < lo || target > hi {
                    Proposal::impossible()
                } else {
                    let Kernel::Spline(s) = self.priors.sample_kernel_with_count(target, &mut self.rng)? else {
                        unreachable!("spline prior draws spline kernels")
                    };
                    self.propose_coefficients(l, s.coefficients().to_vec())
                }
            }
        };
        Ok(self.decide(MoveKind::Bins, p))
    }

    pub fn move_add_edge(&mut self) -> Result<MoveOutcome> {
        if self.fixed_graph || self.edges.len() >= self.priors.size_cap() {
            return Ok(self.skip(MoveKind::AddEdge));
        }
        let Some(l) = self.random_inactive() else {
            return Ok(self.skip(MoveKind::AddEdge));
        };
        let kernel = self.priors.sample_kernel(&mut self.rng)?;
        let p = self.propose_add(l, kernel);
        Ok(self.decide(MoveKind::AddEdge, p))
    }

    pub fn move_remove_edge(&mut self) -> MoveOutcome {
        if self.fixed_graph {
            return self.skip(MoveKind::RemoveEdge);
        }
        let Some(l) = self.random_active() else {
            return self.skip(MoveKind::RemoveEdge);
        };
        let p = self.propose_remove(l);
        self.decide(MoveKind::RemoveEdge, p)
    }

    pub fn move_swap_edge(&mut self) -> Result<MoveOutcome> {
        if self.fixed_graph {
            return Ok(self.skip(MoveKind::SwapEdge));
        }
        let (Some(out), Some(into)) = (self.random_active(), self.random_inactive()) else {
            return Ok(self.skip(MoveKind::SwapEdge));
        };
        let kernel = self.priors.sample_kernel(&mut self.rng)?;
        let p = self.propose_swap(out, into, kernel);
        Ok(self.decide(MoveKind::SwapEdge, p))
    }

    /// One iteration: a move drawn from the mix.
    pub fn step(&mut self) -> Result<MoveOutcome> {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut kind = MoveKind::Nu;
        for m in MoveKind::ALL {
            let p = self.moves.get(m);
            if p > 0.0 {
                kind = m;
                acc += p;
                if u < acc {
                    break;
                }
            }
        }
        let outcome = match kind {
            MoveKind::Nu => self.move_update_nu(),
            MoveKind::Heights => match self.random_active() {
                Some(l) => self.move_update_heights(l),
                None => self.skip(MoveKind::Heights),
            },
            MoveKind::Bins => match self.random_active() {
                Some(l) => self.move_change_bins(l)?,
                None => self.skip(MoveKind::Bins),
            },
            MoveKind::AddEdge => self.move_add_edge()?,
            MoveKind::RemoveEdge => self.move_remove_edge(),
            MoveKind::SwapEdge => self.move_swap_edge()?,
        };
        self.iteration += 1;
        if self.config.adapt && self.iteration <= self.config.burn_in {
            self.adapt();
        }
        if self.config.audit_every > 0 && self.iteration.is_multiple_of(self.config.audit_every) {
            self.audit()?;
        }
        Ok(outcome)
    }

    fn adapt(&mut self) {
        for (kind, target) in [(MoveKind::Nu, 0.44), (MoveKind::Heights, 0.234)] {
            let (n, a) = self.window[kind.index()];
            if n >= ADAPT_WINDOW {
                let factor = (a as f64 / n as f64 - target).exp();
                let scale = match kind {
                    MoveKind::Nu => &mut self.nu_scale,
                    _ => &mut self.kernel_scale,
                };
                *scale = (*scale * factor).clamp(MIN_SCALE, MAX_SCALE);
                self.window[kind.index()] = (0, 0);
            }
        }
    }

    /// Compares the cached log-likelihood with a full recomputation and
    /// refreshes the caches.
    pub fn audit(&mut self) -> Result<f64> {
        let fresh = likelihood::log_likelihood(&self.params(), self.k, self.events, self.horizon)?;
        let cached = self.log_likelihood();
        let delta = (cached - fresh).abs() / fresh.abs().max(1.0);
        self.audits += 1;
        self.max_audit_delta = self.max_audit_delta.max(delta);
        if !(delta <= 1e-8) {
            return Err(HawkesError::CacheAudit {
                iteration: self.iteration,
                cached,
                fresh,
            });
        }
        self.resync();
        Ok(delta)
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        ChainDiagnostics {
            moves: MoveKind::ALL
                .iter()
                .map(|m| (m.name().to_string(), self.stats[m.index()]))
                .collect(),
            audits: self.audits,
            max_audit_delta: self.max_audit_delta,
            final_nu_scale: self.nu_scale,
            final_kernel_scale: self.kernel_scale,
        }
    }

    /// Runs the configured number of iterations and keeps thinned
    /// post-burn-in draws.
    pub fn run(mut self) -> Result<PosteriorSample> {
        let cfg = self.config.clone();
        let mut draws = Vec::with_capacity((cfg.iterations - cfg.burn_in).div_ceil(cfg.thin));
        let mut lls = Vec::with_capacity(draws.capacity());
        for it in 0..cfg.iterations {
            self.step()?;
            if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
                draws.push(self.params());
                lls.push(self.log_likelihood());
            }
        }
        Ok(PosteriorSample {
            component: self.k,
            dimension: self.priors.dimension(),
            kernel_horizon: self.priors.horizon(),
            horizon: self.horizon,
            draws,
            log_likelihoods: lls,
            diagnostics: self.diagnostics(),
        })
    }
}

fn kernel_coords(kernel: &Kernel) -> KernelCoords {
    match kernel {
        Kernel::Histogram(h) => KernelCoords::Weights(h.weights()),
        Kernel::Spline(s) => KernelCoords::Coefficients(s.coefficients().to_vec()),
    }
}

/// `Σ log(a_i / b_i)` with one logarithm per block of products.
fn sum_log_ratios(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    const BLOCK: usize = 16;
    let mut total = likelihood::Neumaier::new(0.0);
    let mut prod = 1.0;
    let mut n = 0;
    for (a, b) in pairs {
        prod *= a / b;
        n += 1;
        if n == BLOCK || !(1e-250..=1e250).contains(&prod) {
            total.add(prod.ln());
            prod = 1.0;
            n = 0;
        }
    }
    total.add(prod.ln());
    total.value()
}

/// `log Π w_j` for weights, zero for coefficients.
fn log_jacobian(coords: &KernelCoords) -> f64 {
    match coords {
        KernelCoords::Weights(w) => w.iter().map(|x| x.ln()).sum(),
        KernelCoords::Coefficients(_) => 0.0,
    }
}

fn softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Log acceptance ratio for adding one source to a graph of size `s` with
/// a kernel proposed from its prior. The kernel density cancels with the
/// proposal; what remains is the likelihood ratio, the size-prior ratio,
/// the uniform-subset correction `C(K,s)/C(K,s+1)`, the choice of the new
/// source `1/(K-s)` against removing one of `s+1`, and the move-type odds.
pub fn edge_add_log_ratio(delta_ll: f64, s: usize, priors: &Priors, moves: &MoveProbabilities) -> f64 {
    let k = priors.dimension() as f64;
    let sf = s as f64;
    delta_ll + priors.size_log_pmf(s + 1) - priors.size_log_pmf(s) - priors.log_subset_count(s + 1)
        + priors.log_subset_count(s)
        + (k - sf).ln()
        - (sf + 1.0).ln()
        + moves.remove_edge.ln()
        - moves.add_edge.ln()
}

/// Reverse of [`edge_add_log_ratio`] for removing one of `s` sources.
pub fn edge_remove_log_ratio(delta_ll: f64, s: usize, priors: &Priors, moves: &MoveProbabilities) -> f64 {
    let k = priors.dimension() as f64;
    let sf = s as f64;
    delta_ll + priors.size_log_pmf(s - 1) - priors.size_log_pmf(s) - priors.log_subset_count(s - 1)
        + priors.log_subset_count(s)
        + sf.ln()
        - (k - sf + 1.0).ln()
        + moves.add_edge.ln()
        - moves.remove_edge.ln()
}

/// Runs one chain for component `k` from the default start.
pub fn run_chain(
    k: usize,
    events: &EventData,
    horizon: f64,
    priors: &Priors,
    config: &McmcConfig,
    seed: Seed,
) -> Result<PosteriorSample> {
    Chain::new(k, events, horizon, priors, config, seed)?.run()
}

/// Runs one chain with the active set fixed to `graph`. Kernels and `ν`
/// start from `start` where it has them, otherwise from prior draws and the
/// empirical rate.
#[allow(clippy::too_many_arguments)]
pub fn run_chain_fixed_graph(
    k: usize,
    events: &EventData,
    horizon: f64,
    priors: &Priors,
    config: &McmcConfig,
    seed: Seed,
    graph: &[usize],
    start: Option<&ComponentParams>,
) -> Result<PosteriorSample> {
    let mut rng = seed.child(0x6772_6170_68).stream(k as u64);
    let n = events.count(k, 0.0, horizon);
    let nu = match start {
        Some(s) => s.nu(),
        None if horizon > 0.0 && n > 0 => n as f64 / horizon,
        None => priors.spec().nu.mean(),
    };
    let mut kernels = BTreeMap::new();
    for l in graph {
        if *l >= priors.dimension() {
            return Err(HawkesError::InvalidParameter(format!("source {l} out of range")));
        }
        let kernel = match start.and_then(|s| s.kernel(*l)) {
            Some(h) => h.clone(),
            None => priors.sample_kernel(&mut rng)?,
        };
        kernels.insert(*l, kernel);
    }
    let initial = ComponentParams::with_active_set(nu, kernels)?;
    Chain::from_state(k, events, horizon, priors, config, seed, &initial, true)?.run()
}

/// Runs chains for the given components in parallel.
pub fn run_chains(
    components: &[usize],
    events: &EventData,
    horizon: f64,
    priors: &Priors,
    config: &McmcConfig,
    seed: Seed,
) -> Vec<Result<PosteriorSample>> {
    components
        .par_iter()
        .map(|k| run_chain(*k, events, horizon, priors, config, seed))
        .collect()
}

/// Posterior summaries of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub component: usize,
    pub draws: usize,
    pub nu_hat: f64,
    /// Posterior mean masses `ρ̂_{ℓk}`, indexed by source.
    pub rho_hat: Vec<f64>,
    pub inclusion: Vec<f64>,
    /// Evaluation grid `x_i = (i + 1) A / 256`.
    pub grid: Vec<f64>,
    /// Posterior mean kernel per source on the grid.
    pub mean_kernel: Vec<Vec<f64>>,
    /// Pointwise 2.5% and 97.5% posterior quantiles per source.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

/// Posterior means, inclusion frequencies and pointwise kernel bands.
pub fn summarize(sample: &PosteriorSample) -> Result<PosteriorSummary> {
    let n = sample.draws.len();
    if n == 0 {
        return Err(HawkesError::EmptySample);
    }
    let k = sample.dimension;
    let a = sample.kernel_horizon;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| a * (i + 1) as f64 / GRID_POINTS as f64)
        .collect();
    let mut rho = vec![0.0; k];
    let mut incl = vec![0usize; k];
    for d in &sample.draws {
        for (l, kernel) in d.kernels() {
            rho[*l] += kernel.mass();
            incl[*l] += 1;
        }
    }
    let mut mean_kernel = vec![vec![0.0; GRID_POINTS]; k];
    let mut lower = vec![vec![0.0; GRID_POINTS]; k];
    let mut upper = vec![vec![0.0; GRID_POINTS]; k];
    for l in 0..k {
        if incl[l] == 0 {
            continue;
        }
        let mut values: Vec<Vec<f64>> = (0..GRID_POINTS).map(|_| Vec::with_capacity(n)).collect();
        for d in &sample.draws {
            let kernel = d.kernel(l);
            for (i, x) in grid.iter().enumerate() {
                values[i].push(kernel.map_or(0.0, |h| h.eval(*x)));
            }
        }
        for (i, v) in values.iter_mut().enumerate() {
            mean_kernel[l][i] = v.iter().sum::<f64>() / n as f64;
            v.sort_by(f64::total_cmp);
            lower[l][i] = quantile_sorted(v, 0.025);
            upper[l][i] = quantile_sorted(v, 0.975);
        }
    }
    Ok(PosteriorSummary {
        component: sample.component,
        draws: n,
        nu_hat: sample.draws.iter().map(ComponentParams::nu).sum::<f64>() / n as f64,
        rho_hat: rho.into_iter().map(|r| r / n as f64).collect(),
        inclusion: incl.into_iter().map(|c| c as f64 / n as f64).collect(),
        grid,
        mean_kernel,
        lower,
        upper,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{log_prior_density, HistPriorSpec, NuPriorSpec, PriorSpec, SizePriorSpec};
    use statrs::function::gamma::ln_gamma;

    fn priors(k: usize) -> Priors {
        Priors::new(
            PriorSpec {
                horizon: 1.0,
                size: SizePriorSpec::TruncatedUniform { cap: k },
                kernel: KernelPriorSpec::Histogram(HistPriorSpec {
                    mean: 2.0,
                    alpha: 1.5,
                    max_bins: 8,
                    sup_cap: None,
                }),
                nu: NuPriorSpec::with_mean(1.0),
            },
            k,
        )
        .unwrap()
    }

    fn events() -> EventData {
        EventData::new(-1.0, 2.0, vec![vec![-0.5, 0.3, 0.9, 1.6], vec![-0.2, 0.5, 1.2]]).unwrap()
    }

    fn hist(w: &[f64]) -> Kernel {
        HistogramKernel::from_weights(1.0, w).unwrap().into()
    }

    fn state(kernels: &[(usize, &[f64])]) -> ComponentParams {
        ComponentParams::with_active_set(0.8, kernels.iter().map(|(l, w)| (*l, hist(w))).collect()).unwrap()
    }

    fn log_target(p: &Priors, f: &ComponentParams) -> f64 {
        likelihood::log_likelihood(f, 0, &events(), 2.0).unwrap() + log_prior_density(p, f)
    }

    fn chain<'a>(p: &'a Priors, ev: &'a EventData, f: &ComponentParams) -> Chain<'a> {
        Chain::from_state(0, ev, 2.0, p, &McmcConfig::default(), Seed::new(1, 0), f, false).unwrap()
    }

    fn log_dirichlet(alpha: f64, w: &[f64]) -> f64 {
        let n = w.len() as f64;
        ln_gamma(alpha * n) - n * ln_gamma(alpha) + w.iter().map(|x| (alpha - 1.0) * x.ln()).sum::<f64>()
    }

    #[test]
    fn nu_ratio_matches_density_ratio() {
        let p = priors(2);
        let ev = events();
        let f = state(&[(0, &[0.5, 0.3, 0.2]), (1, &[0.6, 0.4])]);
        let mut c = chain(&p, &ev, &f);
        let prop = c.propose_nu(1.1);
        let g = f.with_nu(1.1).unwrap();
        let g = ComponentParams::with_active_set(1.1, g.kernels().clone()).unwrap();
        let oracle = log_target(&p, &g) - log_target(&p, &f) + 1.1f64.ln() - 0.8f64.ln();
        assert!(
            (prop.log_ratio - oracle).abs() < 1e-10,
            "{} vs {oracle}",
            prop.log_ratio
        );
        assert!((c.propose_nu(0.8).acceptance_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_ratio_matches_density_ratio() {
        let p = priors(2);
        let ev = events();
        let f = state(&[(0, &[0.5, 0.3, 0.2]), (1, &[0.6, 0.4])]);
        let new_w = [0.4, 0.35, 0.25];
        let mut c = chain(&p, &ev, &f);
        let prop = c.propose_kernel(0, KernelCoords::Weights(new_w.to_vec()));
        let g = state(&[(0, &new_w), (1, &[0.6, 0.4])]);
        // target in weight coordinates times the log-ratio Jacobian Π w
        let jac = |w: &[f64]| w.iter().map(|x| x.ln()).sum::<f64>();
        let oracle = log_target(&p, &g) - log_target(&p, &f) + jac(&new_w) - jac(&[0.5, 0.3, 0.2]);
        assert!((prop.log_ratio - oracle).abs() < 1e-10);
        // and the closed form α Σ log(w'/w) for the prior part
        let lr =
            likelihood::log_likelihood(&g, 0, &ev, 2.0).unwrap() - likelihood::log_likelihood(&f, 0, &ev, 2.0).unwrap();
        let closed = lr + 1.5 * (0..3).map(|j| (new_w[j] / [0.5, 0.3, 0.2][j]).ln()).sum::<f64>();
        assert!((prop.log_ratio - closed).abs() < 1e-10);
    }

    #[test]
    fn split_ratio_matches_reversible_jump_terms() {
        let p = priors(2);
        let ev = events();
        let w = [0.5, 0.3, 0.2];
        let f = state(&[(0, &w)]);
        let mut c = chain(&p, &ev, &f);
        let prop = c.propose_split(0, 1, 0.3);
        let split = [0.5, 0.3, 0.3 * 0.2, 0.7 * 0.2];
        let g = state(&[(0, &split)]);
        let lr =
            likelihood::log_likelihood(&g, 0, &ev, 2.0).unwrap() - likelihood::log_likelihood(&f, 0, &ev, 2.0).unwrap();
        let trunc_poisson = |i: usize| {
            let z: f64 = (1..=8)
                .map(|j| 2f64.powi(j as i32) / (1..=j).product::<usize>() as f64)
                .sum();
            (2f64.powi(i as i32) / (1..=i).product::<usize>() as f64 / z).ln()
        };
        let oracle = lr + trunc_poisson(3) + log_dirichlet(1.5, &split) - trunc_poisson(2) - log_dirichlet(1.5, &w)
            + 0.2f64.ln();
        assert!(
            (prop.log_ratio - oracle).abs() < 1e-10,
            "{} vs {oracle}",
            prop.log_ratio
        );
    }

    #[test]
    fn split_then_merge_restores_state() {
        let p = priors(2);
        let ev = events();
        let w = vec![0.5, 0.3, 0.2];
        let f = state(&[(0, &w)]);
        let mut c = chain(&p, &ev, &f);
        let ll = c.log_likelihood();
        let up = c.propose_split(0, 1, 0.37);
        let forward = up.log_ratio;
        c.commit(up);
        let down = c.propose_merge(0, 1);
        assert!((down.log_ratio + forward).abs() < 1e-10);
        c.commit(down);
        let Some(KernelCoords::Weights(back)) = c.coords(0) else {
            panic!()
        };
        for (a, b) in back.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-15);
        }
        assert!((c.log_likelihood() - ll).abs() < 1e-12);
        assert_eq!(c.propose_merge(0, 1).log_ratio, f64::NEG_INFINITY);
    }

    #[test]
    fn edge_add_ratio_cancels_kernel_density() {
        let p = priors(2);
        let ev = events();
        let f = state(&[(0, &[0.5, 0.3, 0.2])]);
        let new = hist(&[0.3, 0.1, 0.4, 0.2]);
        let mut c = chain(&p, &ev, &f);
        let prop = c.propose_add(1, new.clone());
        let mut kernels = f.kernels().clone();
        kernels.insert(1, new.clone());
        let g = ComponentParams::with_active_set(0.8, kernels).unwrap();
        let moves = MoveProbabilities::default();
        // full Metropolis–Hastings–Green ratio with the proposal density spelled out
        let (s, k) = (1.0f64, 2.0f64);
        let forward = moves.add_edge.ln() - (k - s).ln() + p.log_kernel_density(&new);
        let reverse = moves.remove_edge.ln() - (s + 1.0).ln();
        let oracle = log_target(&p, &g) - log_target(&p, &f) + reverse - forward;
        assert!(
            (prop.log_ratio - oracle).abs() < 1e-10,
            "{} vs {oracle}",
            prop.log_ratio
        );
        // after cancellation: likelihood ratio times the size-prior ratio
        let lr =
            likelihood::log_likelihood(&g, 0, &ev, 2.0).unwrap() - likelihood::log_likelihood(&f, 0, &ev, 2.0).unwrap();
        assert!((prop.log_ratio - (lr + p.size_log_pmf(2) - p.size_log_pmf(1))).abs() < 1e-10);
        let forward_ratio = prop.log_ratio;
        c.commit(prop);
        assert!((c.propose_remove(1).log_ratio + forward_ratio).abs() < 1e-10);
    }

    #[test]
    fn swap_ratio_is_the_likelihood_ratio() {
        let p = priors(2);
        let ev = events();
        let f = state(&[(0, &[0.5, 0.3, 0.2])]);
        let new = hist(&[0.7, 0.3]);
        let mut c = chain(&p, &ev, &f);
        let prop = c.propose_swap(0, 1, new.clone());
        let g = ComponentParams::with_active_set(0.8, [(1, new.clone())].into()).unwrap();
        let oracle = log_target(&p, &g) - log_target(&p, &f) - p.log_kernel_density(&new)
            + p.log_kernel_density(f.kernel(0).unwrap());
        assert!((prop.log_ratio - oracle).abs() < 1e-10);
    }

    #[test]
    fn zero_scale_proposals_are_accepted() {
        let p = priors(2);
        let ev = events();
        let f = state(&[(0, &[0.5, 0.3, 0.2])]);
        let cfg = McmcConfig {
            nu_scale: 0.0,
            kernel_scale: 0.0,
            ..Default::default()
        };
        let mut c = Chain::from_state(0, &ev, 2.0, &p, &cfg, Seed::new(1, 0), &f, false).unwrap();
        assert!(c.move_update_nu().acceptance_probability > 1.0 - 1e-12);
        assert!(c.move_update_heights(0).acceptance_probability > 1.0 - 1e-12);
    }

    #[test]
    fn moves_keep_support_and_simplex() {
        let p = priors(2);
        let ev = events();
        let mut c = Chain::new(
            0,
            &ev,
            2.0,
            &p,
            &McmcConfig {
                audit_every: 100,
                ..Default::default()
            },
            Seed::new(4, 0),
        )
        .unwrap();
        for _ in 0..5_000 {
            let o = c.step().unwrap();
            assert!((0.0..=1.0).contains(&o.acceptance_probability));
            assert!(c.nu() > 0.0);
            for l in c.active_set() {
                let Some(KernelCoords::Weights(w)) = c.coords(l) else {
                    panic!()
                };
                assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
                assert!(w.iter().all(|x| *x > 0.0));
            }
        }
        assert!(c.diagnostics().audits == 50);
        assert!(c.diagnostics().max_audit_delta <= 1e-8);
    }

    #[test]
    fn fixed_seed_replays() {
        let p = priors(2);
        let ev = events();
        let cfg = McmcConfig {
            iterations: 3_000,
            burn_in: 1_000,
            ..Default::default()
        };
        let a = run_chain(0, &ev, 2.0, &p, &cfg, Seed::new(8, 2)).unwrap();
        let b = run_chain(0, &ev, 2.0, &p, &cfg, Seed::new(8, 2)).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.draws.len(), 200);
        let c = run_chain(0, &ev, 2.0, &p, &cfg, Seed::new(8, 3)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn fixed_graph_never_changes_the_active_set() {
        let p = priors(2);
        let ev = events();
        let cfg = McmcConfig {
            iterations: 2_000,
            burn_in: 500,
            ..Default::default()
        };
        let s = run_chain_fixed_graph(0, &ev, 2.0, &p, &cfg, Seed::new(2, 0), &[1], None).unwrap();
        assert!(s.draws.iter().all(|d| d.active_set() == vec![1]));
        let s = run_chain_fixed_graph(0, &ev, 2.0, &p, &cfg, Seed::new(2, 0), &[], None).unwrap();
        assert!(s.draws.iter().all(|d| d.kernels().is_empty()));
    }

    fn sample_of(draws: Vec<ComponentParams>) -> PosteriorSample {
        PosteriorSample {
            component: 0,
            dimension: 3,
            kernel_horizon: 1.0,
            horizon: 2.0,
            log_likelihoods: vec![0.0; draws.len()],
            draws,
            diagnostics: ChainDiagnostics {
                moves: BTreeMap::new(),
                audits: 0,
                max_audit_delta: 0.0,
                final_nu_scale: 0.0,
                final_kernel_scale: 0.0,
            },
        }
    }

    #[test]
    fn summaries_of_identical_draws() {
        let f = state(&[(1, &[0.5, 0.3, 0.2])]);
        let s = summarize(&sample_of(vec![f.clone(); 5])).unwrap();
        assert_eq!(s.nu_hat, 0.8);
        assert_eq!(s.inclusion, vec![0.0, 1.0, 0.0]);
        assert!((s.rho_hat[1] - 0.5).abs() < 1e-15);
        assert_eq!(s.rho_hat[0], 0.0);
        assert_eq!(s.rho_hat[2], 0.0);
        assert_eq!(s.grid.len(), GRID_POINTS);
        let h = f.kernel(1).unwrap();
        for (i, x) in s.grid.iter().enumerate() {
            assert_eq!(s.mean_kernel[1][i], h.eval(*x));
            assert_eq!(s.lower[1][i], h.eval(*x));
        }
        assert!(matches!(summarize(&sample_of(vec![])), Err(HawkesError::EmptySample)));
    }

    #[test]
    fn summaries_match_direct_averages() {
        let draws = vec![
            state(&[(1, &[0.5, 0.3, 0.2])]),
            state(&[(0, &[0.9, 0.1]), (1, &[0.2, 0.2, 0.6])]),
            state(&[]),
            state(&[(0, &[0.6, 0.4])]),
        ];
        let s = summarize(&sample_of(draws.clone())).unwrap();
        for l in 0..3 {
            let mut total = 0.0;
            let mut present = 0.0;
            for d in &draws {
                if let Some(h) = d.kernel(l) {
                    total += h.mass();
                    present += 1.0;
                }
            }
            assert!((s.rho_hat[l] - total / 4.0).abs() < 1e-15);
            assert_eq!(s.inclusion[l], present / 4.0);
        }
    }
}
