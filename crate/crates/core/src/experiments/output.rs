//! CSV outputs. Every file opens with `#` lines carrying the tool version,
//! the content hash of the configuration and of input files, and the full
//! resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, TruthSpec};
use super::diagnose::DiagnosticRow;
use super::study::RateStudy;
use crate::error::{HawkesError, Result};
use crate::events::EventData;
use crate::params_io::network_to_toml;

pub const TOOL: &str = concat!("hawkes ", env!("CARGO_PKG_VERSION"));

/// Git-style object hash: SHA-256 of `"blob <len>\0" ++ content`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

/// Comment block written at the top of every output file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub lines: Vec<String>,
}

impl Metadata {
    pub fn new() -> Self {
        Self {
            lines: vec![format!("tool = {TOOL}")],
        }
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    /// Adds the hash of an input file.
    pub fn push_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.push(&format!("input {}", path.display()), content_hash(&bytes));
        Ok(())
    }

    /// Hash and full text of the resolved configuration, plus hashes of the
    /// files it refers to.
    pub fn for_config(config: &ExperimentConfig) -> Result<Self> {
        let text = config.to_toml()?;
        let mut meta = Self::new();
        meta.push("config_hash", content_hash(text.as_bytes()));
        if let Some(TruthSpec::File { path }) = &config.truth {
            meta.push_input(path)?;
        }
        meta.push("threshold", config.threshold.describe());
        meta.push(
            "error_summary",
            "median over posterior draws per (T, replicate, k); median over (replicate, k) per T",
        );
        meta.lines.push("config:".into());
        meta.lines.extend(text.lines().map(|l| format!("  {l}")));
        Ok(meta)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        for l in &self.lines {
            writeln!(out, "# {l}")?;
        }
        Ok(())
    }
}

/// Shortest round-trip rendering, in exponent form for very small or large
/// magnitudes; non-finite values as `NaN`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_set(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes `# metadata`, the header and the rows of one table.
pub fn write_table(path: &Path, meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    meta.write(&mut buf)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| HawkesError::Io(std::io::Error::other(e));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Paths of the files written by [`write_rate_study`].
#[derive(Debug, Clone)]
pub struct RateStudyFiles {
    pub rows: PathBuf,
    pub summary: PathBuf,
    pub two_step: PathBuf,
    pub failures: PathBuf,
    pub plot: PathBuf,
    pub truth: PathBuf,
}

pub fn write_rate_study(dir: &Path, config: &ExperimentConfig, study: &RateStudy) -> Result<RateStudyFiles> {
    fs::create_dir_all(dir)?;
    let mut meta = Metadata::for_config(config)?;
    let t = &study.truth;
    meta.push("truth_spectral_radius", fmt_f64(t.spectral_radius));
    meta.push("truth_rescale", fmt_f64(t.rescale));
    meta.push(
        "truth_certificate",
        format!(
            "c={} R_inf={} R_1={}",
            fmt_f64(t.constants.c),
            fmt_f64(t.constants.r_inf),
            fmt_f64(t.constants.r_one)
        ),
    );
    let slope = |s: Option<f64>| s.map_or("NaN".to_string(), fmt_f64);
    meta.push("d1T_log_log_slope", slope(study.d1t_slope));
    meta.push("l1_log_log_slope", slope(study.l1_slope));

    let files = RateStudyFiles {
        rows: dir.join("rate_study.csv"),
        summary: dir.join("rate_summary.csv"),
        two_step: dir.join("two_step.csv"),
        failures: dir.join("failures.csv"),
        plot: dir.join("plot_rate.csv"),
        truth: dir.join("truth.toml"),
    };
    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.horizon),
                r.replicate.to_string(),
                r.component.to_string(),
                fmt_f64(r.d1t_median),
                fmt_f64(r.l1_median),
                fmt_f64(r.l1_nu),
                fmt_f64(r.l1_false_mass),
                fmt_f64(r.l1_active),
                u8::from(r.exact_recovery).to_string(),
            ]
        })
        .collect();
    write_table(
        &files.rows,
        &meta,
        &[
            "T",
            "replicate",
            "k",
            "d1T_median",
            "l1_median",
            "l1_nu",
            "l1_false_mass",
            "l1_active",
            "exact_recovery",
        ],
        &rows,
    )?;
    let summary: Vec<Vec<String>> = study
        .summary
        .iter()
        .map(|s| {
            vec![
                fmt_f64(s.horizon),
                s.rows.to_string(),
                fmt_f64(s.d1t_median),
                fmt_f64(s.l1_median),
                fmt_f64(s.exact_recovery_rate),
            ]
        })
        .collect();
    write_table(
        &files.summary,
        &meta,
        &["T", "rows", "d1T_median", "l1_median", "exact_recovery_rate"],
        &summary,
    )?;
    let two: Vec<Vec<String>> = study
        .two_step
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.horizon),
                r.replicate.to_string(),
                r.component.to_string(),
                fmt_f64(r.threshold),
                fmt_set(&r.selected),
                fmt_set(&r.truth),
                u8::from(r.exact_recovery).to_string(),
                fmt_f64(r.full_d1t_median),
                fmt_f64(r.full_l1_median),
                fmt_f64(r.refit_d1t_median),
                fmt_f64(r.refit_l1_median),
            ]
        })
        .collect();
    write_table(
        &files.two_step,
        &meta,
        &[
            "T",
            "replicate",
            "k",
            "threshold",
            "selected",
            "truth",
            "exact_recovery",
            "full_d1T_median",
            "full_l1_median",
            "refit_d1T_median",
            "refit_l1_median",
        ],
        &two,
    )?;
    let failures: Vec<Vec<String>> = study
        .failures
        .iter()
        .map(|f| {
            vec![
                fmt_f64(f.horizon),
                f.replicate.to_string(),
                f.component.map_or(String::new(), |k| k.to_string()),
                f.error.clone(),
            ]
        })
        .collect();
    write_table(&files.failures, &meta, &["T", "replicate", "k", "error"], &failures)?;
    let mut plot = Vec::new();
    for s in &study.summary {
        plot.push(vec![fmt_f64(s.horizon), fmt_f64(s.d1t_median), "d1T_median".into()]);
        plot.push(vec![fmt_f64(s.horizon), fmt_f64(s.l1_median), "l1_median".into()]);
    }
    write_table(&files.plot, &meta, &["x", "y", "series"], &plot)?;
    fs::write(&files.truth, network_to_toml(&study.truth.params)?)?;
    Ok(files)
}

pub fn write_diagnostics(path: &Path, config: &ExperimentConfig, rows: &[DiagnosticRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let meta = Metadata::for_config(config)?;
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.truth.clone(),
                r.check.clone(),
                r.component.map_or(String::new(), |k| k.to_string()),
                fmt_f64(r.horizon),
                fmt_f64(r.statistic),
                r.std_error.map_or(String::new(), fmt_f64),
                fmt_f64(r.bound),
                u8::from(r.pass).to_string(),
            ]
        })
        .collect();
    write_table(
        path,
        &meta,
        &[
            "truth",
            "check",
            "k",
            "horizon",
            "statistic",
            "std_error",
            "bound",
            "pass",
        ],
        &rows,
    )
}

/// Sidecar describing an event file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventManifest {
    pub tool: String,
    pub simulator: String,
    pub dimension: usize,
    pub start: f64,
    pub end: f64,
    pub counts: Vec<usize>,
    pub seed: u64,
    pub replicate: u64,
    pub params_hash: String,
    pub events_hash: String,
}

impl EventManifest {
    pub fn new(
        simulator: &str,
        events: &EventData,
        seed: u64,
        replicate: u64,
        params_text: &str,
        events_csv: &[u8],
    ) -> Self {
        Self {
            tool: TOOL.to_string(),
            simulator: simulator.to_string(),
            dimension: events.dimension(),
            start: events.start(),
            end: events.end(),
            counts: events.all_times().iter().map(Vec::len).collect(),
            seed,
            replicate,
            params_hash: content_hash(params_text.as_bytes()),
            events_hash: content_hash(events_csv),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HawkesError::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| HawkesError::Parse(e.to_string()))
    }
}

/// `events.csv` → `events.csv.manifest.toml`.
pub fn manifest_path(events: &Path) -> PathBuf {
    let mut name = events.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    events.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_object_format() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn table_has_metadata_then_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut meta = Metadata::new();
        meta.push("answer", 42);
        write_table(&path, &meta, &["a", "b"], &[vec!["1".into(), "x y".into()]]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# tool = hawkes "));
        assert!(text.ends_with("# answer = 42\na,b\n1,x y\n"));
    }

    #[test]
    fn manifest_sits_next_to_events() {
        assert_eq!(
            manifest_path(Path::new("out/ev.csv")),
            PathBuf::from("out/ev.csv.manifest.toml")
        );
    }
}
