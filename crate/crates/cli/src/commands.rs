use std::fs;
use std::io::{BufRead, BufReader, Cursor};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hawkes_core::events::format_significant;
use hawkes_core::experiments::output::{
    fmt_f64, manifest_path, write_diagnostics, write_rate_study, write_table, EventManifest, Metadata,
};
use hawkes_core::experiments::{self, ExperimentConfig, FitConfig};
use hawkes_core::losses::loss_report;
use hawkes_core::mcmc::{run_chains, summarize, PosteriorSample};
use hawkes_core::params_io::{read_draws, read_network, write_draws};
use hawkes_core::sim::{simulate_cluster, simulate_thinning};
use hawkes_core::two_step::two_step_all;
use hawkes_core::{log_likelihood, ComponentParams, EventData, Priors, Seed, ThresholdPolicy};

/// Reads an event file. The window and dimension come from the manifest
/// sidecar when present; otherwise the window is `[-A, T]` and the
/// dimension `fallback_dim`.
fn load_events(path: &Path, fallback_dim: usize, kernel_horizon: f64, horizon: f64) -> Result<EventData> {
    let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sidecar = manifest_path(path);
    let (dim, start, end) = if sidecar.exists() {
        let m = EventManifest::read(&sidecar)?;
        (m.dimension, m.start, m.end)
    } else {
        (fallback_dim, -kernel_horizon, horizon)
    };
    EventData::read_csv(Cursor::new(text), dim, start, end).with_context(|| format!("parsing {}", path.display()))
}

fn parse_components(spec: &str, dim: usize) -> Result<Vec<usize>> {
    if spec == "all" {
        return Ok((0..dim).collect());
    }
    let k: usize = spec
        .parse()
        .with_context(|| format!("component must be `all` or an index, got {spec}"))?;
    if k >= dim {
        bail!("component {k} out of range for dimension {dim}");
    }
    Ok(vec![k])
}

fn input_metadata(inputs: &[&Path]) -> Result<Metadata> {
    let mut meta = Metadata::new();
    for p in inputs {
        meta.push_input(p)?;
    }
    Ok(meta)
}

pub fn simulate(
    params: &Path,
    horizon: f64,
    seed: u64,
    replicates: u64,
    out: &Path,
    method: &str,
    warmup: Option<f64>,
) -> Result<()> {
    let params_text = fs::read_to_string(params)?;
    let f = read_network(params)?;
    fs::create_dir_all(out)?;
    for r in 0..replicates {
        let s = Seed::new(seed, r);
        let (events, _) = match method {
            "cluster" => simulate_cluster(&f, horizon, s)?,
            "thinning" => simulate_thinning(&f, horizon, warmup.unwrap_or(20.0 * f.horizon()), s)?,
            other => bail!("unknown simulation method `{other}` (expected cluster or thinning)"),
        };
        let mut csv = Vec::new();
        events.write_csv(&mut csv)?;
        let path = out.join(format!("events_{r}.csv"));
        fs::write(&path, &csv)?;
        let manifest = EventManifest::new(method, &events, seed, r, &params_text, &csv);
        fs::write(manifest_path(&path), manifest.to_toml()?)?;
        eprintln!("{}: {} events", path.display(), events.total());
    }
    Ok(())
}

fn write_fit_outputs(out: &Path, prefix: &str, meta: &Metadata, samples: &[PosteriorSample]) -> Result<()> {
    let mut summary_rows = Vec::new();
    let mut diag_rows = Vec::new();
    for s in samples {
        let path = out.join(format!("{prefix}draws_k{}.jsonl", s.component));
        let mut buf = Vec::new();
        write_draws(s, &mut buf)?;
        fs::write(&path, buf)?;
        let sum = summarize(s)?;
        for l in 0..s.dimension {
            summary_rows.push(vec![
                s.component.to_string(),
                l.to_string(),
                s.component.to_string(),
                fmt_f64(sum.rho_hat[l]),
                fmt_f64(sum.inclusion[l]),
            ]);
        }
        let d = &s.diagnostics;
        for (name, st) in &d.moves {
            diag_rows.push(vec![
                s.component.to_string(),
                name.clone(),
                st.proposed.to_string(),
                st.accepted.to_string(),
                st.skipped.to_string(),
                fmt_f64(st.acceptance_rate()),
                d.audits.to_string(),
                fmt_f64(d.max_audit_delta),
                fmt_f64(d.final_nu_scale),
                fmt_f64(d.final_kernel_scale),
            ]);
        }
    }
    write_table(
        &out.join(format!("{prefix}summary.csv")),
        meta,
        &["component", "source", "target", "rho_hat", "inclusion_prob"],
        &summary_rows,
    )?;
    write_table(
        &out.join(format!("{prefix}diagnostics.csv")),
        meta,
        &[
            "component",
            "move",
            "proposed",
            "accepted",
            "skipped",
            "acceptance_rate",
            "audits",
            "max_audit_delta",
            "final_nu_scale",
            "final_kernel_scale",
        ],
        &diag_rows,
    )?;
    Ok(())
}

struct FitInputs {
    config: FitConfig,
    priors: Priors,
    events: EventData,
    components: Vec<usize>,
    meta: Metadata,
}

fn fit_inputs(prior: &Path, events: &Path, horizon: f64, components: &str, seed: u64) -> Result<FitInputs> {
    let config = FitConfig::from_file(prior)?;
    let priors = Priors::new(config.prior.clone(), config.dimension)?;
    let events_data = load_events(events, config.dimension, config.prior.horizon, horizon)?;
    if events_data.dimension() != config.dimension {
        bail!(
            "events have {} components, the prior expects {}",
            events_data.dimension(),
            config.dimension
        );
    }
    let components = parse_components(components, config.dimension)?;
    let mut meta = input_metadata(&[prior, events])?;
    meta.push("horizon", fmt_f64(horizon));
    meta.push("seed", seed);
    Ok(FitInputs {
        config,
        priors,
        events: events_data,
        components,
        meta,
    })
}

pub fn fit(prior: &Path, events: &Path, horizon: f64, components: &str, seed: u64, out: &Path) -> Result<()> {
    let inputs = fit_inputs(prior, events, horizon, components, seed)?;
    fs::create_dir_all(out)?;
    let samples = run_chains(
        &inputs.components,
        &inputs.events,
        horizon,
        &inputs.priors,
        &inputs.config.mcmc,
        Seed::new(seed, 0),
    )
    .into_iter()
    .collect::<hawkes_core::Result<Vec<_>>>()?;
    write_fit_outputs(out, "", &inputs.meta, &samples)
}

fn parse_threshold(arg: &str, config: &FitConfig) -> Result<ThresholdPolicy> {
    if arg == "auto" {
        return Ok(match config.threshold {
            p @ ThresholdPolicy::Auto { .. } => p,
            ThresholdPolicy::Fixed { .. } => ThresholdPolicy::default(),
        });
    }
    let value: f64 = arg
        .parse()
        .with_context(|| format!("threshold must be `auto` or a number, got {arg}"))?;
    Ok(ThresholdPolicy::Fixed { value })
}

#[allow(clippy::too_many_arguments)]
pub fn two_step(
    prior: &Path,
    events: &Path,
    horizon: f64,
    threshold: &str,
    components: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut inputs = fit_inputs(prior, events, horizon, components, seed)?;
    let policy = parse_threshold(threshold, &inputs.config)?;
    let u = policy.threshold(horizon, inputs.config.dimension)?;
    inputs.meta.push("threshold", policy.describe());
    inputs.meta.push("threshold_value", fmt_f64(u));
    fs::create_dir_all(out)?;
    let results = two_step_all(
        &inputs.components,
        &inputs.events,
        horizon,
        &inputs.priors,
        &inputs.config.mcmc,
        Seed::new(seed, 0),
        u,
    )
    .into_iter()
    .collect::<hawkes_core::Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.component.to_string(),
                r.selected.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            ]
        })
        .collect();
    write_table(
        &out.join("selected_graph.csv"),
        &inputs.meta,
        &["component", "selected_sources"],
        &rows,
    )?;
    let full: Vec<PosteriorSample> = results.iter().map(|r| r.full.clone()).collect();
    let refit: Vec<PosteriorSample> = results.into_iter().map(|r| r.refit).collect();
    write_fit_outputs(out, "", &inputs.meta, &full)?;
    write_fit_outputs(out, "refit_", &inputs.meta, &refit)
}

/// A draw file starts with a JSON object; anything else is read as a
/// parameter file.
fn read_estimates(path: &Path) -> Result<Vec<(usize, Option<usize>, ComponentParams)>> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let first = reader.fill_buf()?.iter().find(|b| !b.is_ascii_whitespace()).copied();
    if first == Some(b'{') {
        let (header, draws) = read_draws(reader)?;
        Ok(draws
            .into_iter()
            .enumerate()
            .map(|(i, d)| (header.component, Some(i), d))
            .collect())
    } else {
        let f = read_network(path)?;
        Ok(f.components()
            .iter()
            .cloned()
            .enumerate()
            .map(|(k, c)| (k, None, c))
            .collect())
    }
}

pub fn loss(truth: &Path, estimate: &Path, events: &Path, horizon: f64, out: &Path) -> Result<()> {
    let f0 = read_network(truth)?;
    let ev = load_events(events, f0.dimension(), f0.horizon(), horizon)?;
    let estimates = read_estimates(estimate)?;
    let mut rows = Vec::with_capacity(estimates.len());
    for (k, draw, est) in &estimates {
        if *k >= f0.dimension() {
            bail!(
                "estimate component {k} is outside the truth's dimension {}",
                f0.dimension()
            );
        }
        let r = loss_report(est, f0.component(*k), &ev, horizon)?;
        rows.push(vec![
            k.to_string(),
            draw.map_or(String::new(), |d| d.to_string()),
            fmt_f64(r.d1t),
            fmt_f64(r.l1.total),
            fmt_f64(r.l1.nu),
            fmt_f64(r.l1.false_mass),
            fmt_f64(r.l1.active),
        ]);
    }
    let mut meta = input_metadata(&[truth, estimate, events])?;
    meta.push("horizon", fmt_f64(horizon));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_table(
        out,
        &meta,
        &["component", "draw", "d1T", "l1", "l1_nu", "l1_false_mass", "l1_active"],
        &rows,
    )?;
    Ok(())
}

pub fn loglik(params: &Path, events: &Path, component: usize, horizon: f64) -> Result<()> {
    let f = read_network(params)?;
    if component >= f.dimension() {
        bail!("component {component} out of range for dimension {}", f.dimension());
    }
    let ev = load_events(events, f.dimension(), f.horizon(), horizon)?;
    let value = log_likelihood(f.component(component), component, &ev, horizon)?;
    println!("{}", format_significant(value, 17));
    Ok(())
}

fn study_config(path: &Path, workers: Option<usize>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(w) = workers {
        config.workers = w;
    }
    Ok(config)
}

fn output_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    out.or_else(|| config.output_dir.clone())
        .context("no output directory: pass --out or set output_dir")
}

pub fn rate_study(config: &Path, out: Option<PathBuf>, workers: Option<usize>) -> Result<()> {
    let config = study_config(config, workers)?;
    let dir = output_dir(&config, out)?;
    let study = experiments::rate_study(&config)?;
    let files = write_rate_study(&dir, &config, &study)?;
    for f in &study.failures {
        eprintln!(
            "failed: T={} replicate={} k={:?}: {}",
            f.horizon, f.replicate, f.component, f.error
        );
    }
    match study.d1t_slope {
        Some(s) => eprintln!("d1T log-log slope {s:.4}"),
        None => eprintln!("d1T log-log slope undefined"),
    }
    eprintln!("wrote {}", files.rows.display());
    Ok(())
}

pub fn diagnose(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let config = study_config(config, None)?;
    let path = match out {
        Some(p) => p,
        None => output_dir(&config, None)?.join("diagnostics.csv"),
    };
    let rows = experiments::with_workers(config.workers, || experiments::diagnose(&config))??;
    write_diagnostics(&path, &config, &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    eprintln!("{} checks, {failed} failed; wrote {}", rows.len(), path.display());
    Ok(())
}
