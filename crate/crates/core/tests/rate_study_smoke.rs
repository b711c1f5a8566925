//! A small rate study end to end: every table is written with its full
//! column set and one row per job.

use hawkes_core::experiments::output::write_rate_study;
use hawkes_core::experiments::{rate_study, ExperimentConfig};

const CONFIG: &str = r#"
name = "smoke"
seed = 7
horizons = [60.0, 120.0]
replicates = 2

[truth]
kind = "generator"
dimension = 3
sparsity = 1
mass_range = [0.3, 0.5]
nu_range = [0.5, 1.0]
shape = { kind = "step", profile = [2.0, 1.0] }

[prior]
size = { kind = "truncated-poisson", mean = 1.0, cap = 3 }
kernel = { kind = "histogram", mean = 2.0, alpha = 1.0 }
nu = { rate = 2.0 }

[mcmc]
iterations = 600
burn_in = 200
thin = 4

[study]
loss_draws = 50
refit_horizons = [120.0]
"#;

fn table(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn rate_study_writes_every_table() {
    let config = ExperimentConfig::from_toml(CONFIG).unwrap();
    let study = rate_study(&config).unwrap();
    assert!(study.failures.is_empty(), "{:?}", study.failures);
    assert!(study.d1t_slope.is_some_and(f64::is_finite) && study.l1_slope.is_some_and(f64::is_finite));

    let dir = tempfile::tempdir().unwrap();
    let files = write_rate_study(dir.path(), &config, &study).unwrap();

    let (header, rows) = table(&files.rows);
    assert_eq!(
        header,
        [
            "T",
            "replicate",
            "k",
            "d1T_median",
            "l1_median",
            "l1_nu",
            "l1_false_mass",
            "l1_active",
            "exact_recovery"
        ]
    );
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(rows.iter().all(|r| r.len() == header.len()));

    let (header, rows) = table(&files.summary);
    assert_eq!(header, ["T", "rows", "d1T_median", "l1_median", "exact_recovery_rate"]);
    assert_eq!(rows.len(), 2);

    // only T = 120 is refitted
    let (header, rows) = table(&files.two_step);
    assert_eq!(header.len(), 11);
    assert_eq!(rows.len(), 2 * 3);
    assert!(rows.iter().all(|r| r[0].parse::<f64>().unwrap() == 120.0));

    let (header, rows) = table(&files.failures);
    assert_eq!(header, ["T", "replicate", "k", "error"]);
    assert!(rows.is_empty());

    let (header, _) = table(&files.plot);
    assert_eq!(header, ["x", "y", "series"]);

    let text = std::fs::read_to_string(&files.rows).unwrap();
    for key in ["# tool = ", "# config_hash = ", "# threshold = ", "# error_summary = "] {
        assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
    assert!(hawkes_core::params_io::read_network(&files.truth).is_ok());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let bad = CONFIG.replace("thin = 4", "thin = 4\nthinning = 2");
    assert!(ExperimentConfig::from_toml(&bad).is_err());
    let bad = CONFIG.replace("[study]", "[studdy]");
    assert!(ExperimentConfig::from_toml(&bad).is_err());
}
