//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset:
//! `cargo test --release --test acceptance -- 1 4 10`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use hawkes_core::events::EventData;
use hawkes_core::experiments::diagnose::{ergodic_checks, moment_checks};
use hawkes_core::experiments::output::write_rate_study;
use hawkes_core::experiments::{canonical_truth, rate_study, DiagnoseOptions, ExperimentConfig, RateStudy};
use hawkes_core::likelihood::{compensator, compensator_per_event, log_likelihood};
use hawkes_core::mcmc::{median, run_chain, run_chain_fixed_graph, McmcConfig, MoveProbabilities};
use hawkes_core::priors::{HistPriorSpec, KernelPriorSpec, NuPriorSpec, PriorSpec, Priors, SizePriorSpec};
use hawkes_core::sim::{simulate_cluster, simulate_thinning};
use hawkes_core::two_step::select_graph;
use hawkes_core::{ComponentParams, HistogramKernel, Kernel, NetworkParams, Seed};
use rand::Rng;
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, Discrete, Gamma, Poisson};

// criterion 1
const INSTANCES: usize = 200;
const RIEMANN_POINTS: usize = 1_000_000;
const RIEMANN_TOL: f64 = 1e-6;
const CLOSED_FORM_TOL: f64 = 1e-12;
// criterion 2
const POISSON_INSTANCES: usize = 100;
const POISSON_TOL: f64 = 1e-12;
// criterion 3
const GOF_P: f64 = 0.01;
const SE_BAND: f64 = 3.0;
// criterion 4
const MOMENT_REPLICATES: usize = 200;
// criterion 5
const ERGODIC_REPLICATES: usize = 50;
const ERGODIC_RATIO: (f64, f64) = (1.2, 3.5);
// criterion 6
const PRIOR_DRAWS: usize = 100_000;
const TV_TOL: f64 = 0.05;
/// Asymptotic Kolmogorov quantile at level 0.01 for `√n D_n`.
const KS_CRIT: f64 = 1.628;
// criterion 8
const SLOPE_MAX: f64 = -0.25;
// criterion 9
const RECOVERY_MIN: f64 = 0.9;
const REFIT_RATIO: f64 = 1.1;
// criterion 10
const GRID_UNITS: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Standard error of the sample variance (fourth-moment formula).
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (m, sd) = mean_sd(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let s4 = sd.powi(4);
    ((m4 - s4 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

fn random_histogram<R: Rng>(rng: &mut R, horizon: f64) -> Kernel {
    let bins = rng.random_range(1..=4);
    let mass = rng.random_range(0.05..0.9);
    let raw: Vec<f64> = (0..bins).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum::<f64>() * horizon / bins as f64;
    HistogramKernel::new(horizon, raw.iter().map(|x| x * mass / total).collect())
        .unwrap()
        .into()
}

/// Midpoint Riemann sum of `λ` on [0, T] with `n` points, accumulated
/// through a difference array over the grid: each event adds each bin
/// height to the grid points whose lag falls in that bin.
fn riemann_compensator(f_k: &ComponentParams, events: &EventData, horizon: f64, n: usize) -> f64 {
    let dt = horizon / n as f64;
    let mut diff = vec![0.0; n + 1];
    for (l, kernel) in f_k.kernels() {
        let h = kernel.as_histogram().unwrap();
        let w = h.bin_width();
        for s in events.times(*l) {
            for (b, height) in h.heights().iter().enumerate() {
                // lags in (b w, (b+1) w]
                let lo = s + b as f64 * w;
                let hi = s + (b + 1) as f64 * w;
                let first = ((lo / dt - 0.5).floor() + 1.0).max(0.0);
                let last = (hi / dt - 0.5).floor().min(n as f64 - 1.0);
                if first > last {
                    continue;
                }
                diff[first as usize] += height;
                diff[last as usize + 1] -= height;
            }
        }
    }
    let mut running = 0.0;
    let mut sum = 0.0;
    for d in &diff[..n] {
        running += d;
        sum += f_k.nu() + running;
    }
    sum * dt
}

fn criterion_1() -> Outcome {
    let mut rng = Seed::new(101, 0).stream(0);
    let (mut worst_riemann, mut worst_closed) = (0.0f64, 0.0f64);
    for _ in 0..INSTANCES {
        let dim = rng.random_range(1..=3);
        let a = rng.random_range(0.5..2.0);
        let horizon = rng.random_range(1.0..5.0);
        let total = rng.random_range(0..=100);
        let mut times = vec![Vec::new(); dim];
        for _ in 0..total {
            times[rng.random_range(0..dim)].push(-a + rng.random::<f64>() * (horizon + a));
        }
        for t in &mut times {
            t.sort_by(f64::total_cmp);
        }
        let events = EventData::new(-a, horizon, times).unwrap();
        let mut kernels = BTreeMap::new();
        for l in 0..dim {
            if rng.random::<f64>() < 0.7 {
                kernels.insert(l, random_histogram(&mut rng, a));
            }
        }
        let f_k = ComponentParams::new(rng.random_range(0.2..2.0), kernels).unwrap();
        let sweep = compensator(&f_k, &events, horizon).unwrap();
        let closed = compensator_per_event(&f_k, &events, horizon).unwrap();
        let riemann = riemann_compensator(&f_k, &events, horizon, RIEMANN_POINTS);
        worst_riemann = worst_riemann.max((sweep - riemann).abs() / riemann.abs().max(1.0));
        worst_closed = worst_closed.max((sweep - closed).abs() / closed.abs().max(1.0));
    }
    outcome(
        worst_riemann <= RIEMANN_TOL && worst_closed <= CLOSED_FORM_TOL,
        format!(
            "{INSTANCES} instances; max relative gap to Riemann {worst_riemann:.2e} (tol {RIEMANN_TOL:e}), to per-event sum {worst_closed:.2e} (tol {CLOSED_FORM_TOL:e})"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = Seed::new(202, 0).stream(0);
    let mut worst = 0.0f64;
    for _ in 0..POISSON_INSTANCES {
        let dim = rng.random_range(1..=4);
        let a = rng.random_range(0.5..2.0);
        let horizon = rng.random_range(1.0..200.0);
        let nu = rng.random_range(0.05..5.0);
        let mut times = vec![Vec::new(); dim];
        for t in times.iter_mut() {
            let n = rng.random_range(0..200);
            *t = (0..n).map(|_| -a + rng.random::<f64>() * (horizon + a)).collect();
            t.sort_by(f64::total_cmp);
        }
        let events = EventData::new(-a, horizon, times).unwrap();
        let k = rng.random_range(0..dim);
        // explicit zero kernels on every source
        let kernels = (0..dim)
            .map(|l| (l, Kernel::from(HistogramKernel::new(a, vec![0.0; 1 + l]).unwrap())))
            .collect();
        let f_k = ComponentParams::with_active_set(nu, kernels).unwrap();
        let n = events.in_closed(k, 0.0, horizon).iter().filter(|t| **t > 0.0).count() as f64;
        let exact = n * nu.ln() - nu * horizon;
        let got = log_likelihood(&f_k, k, &events, horizon).unwrap();
        worst = worst.max((got - exact).abs() / exact.abs().max(1.0));
    }
    outcome(
        worst <= POISSON_TOL,
        format!("{POISSON_INSTANCES} instances; max relative error {worst:.2e} (tol {POISSON_TOL:e})"),
    )
}

fn criterion_3() -> Outcome {
    // (a) ρ = 0: unit-window counts of one long path against Poisson(ν)
    let nu = 2.0;
    let horizon = 4000.0;
    let f0 = NetworkParams::new(1.0, vec![ComponentParams::background(nu).unwrap()]).unwrap();
    let (events, _) = simulate_cluster(&f0, horizon, Seed::new(303, 0)).unwrap();
    let mut counts = vec![0usize; horizon as usize];
    for t in events.in_half_open(0, 0.0, horizon) {
        counts[*t as usize] += 1;
    }
    let law = Poisson::new(nu).unwrap();
    let n = counts.len() as f64;
    // cells 0..=c-1 and a tail cell, each with expected count >= 5
    let mut cells = 0;
    while n * law.pmf(cells as u64) >= 5.0 {
        cells += 1;
    }
    let mut observed = vec![0.0; cells + 1];
    for c in &counts {
        observed[(*c).min(cells)] += 1.0;
    }
    let mut expected: Vec<f64> = (0..cells).map(|i| n * law.pmf(i as u64)).collect();
    expected.push(n - expected.iter().sum::<f64>());
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(cells as f64).unwrap().cdf(chi2);
    let gof = p > GOF_P;

    // (b) K = 1, ρ = 0.5, μ = 2
    let one = canonical_truth(1).unwrap().params;
    let rates: Vec<f64> = (0..50)
        .map(|r| {
            let (ev, _) = simulate_cluster(&one, 2000.0, Seed::new(304, r)).unwrap();
            ev.count(0, 0.0, 2000.0) as f64 / 2000.0
        })
        .collect();
    let (m, sd) = mean_sd(&rates);
    let se = sd / 50f64.sqrt();
    let rate_ok = (m - 2.0).abs() <= SE_BAND * se;

    // (c) cluster against thinning on the three-component network
    let three = canonical_truth(3).unwrap().params;
    let reps = 300;
    let h = 50.0;
    let draw = |thinning: bool| -> Vec<Vec<f64>> {
        (0..reps)
            .map(|r| {
                let (ev, _) = if thinning {
                    simulate_thinning(&three, h, 30.0, Seed::new(306, r)).unwrap()
                } else {
                    simulate_cluster(&three, h, Seed::new(305, r)).unwrap()
                };
                (0..3).map(|k| ev.count(k, 0.0, h) as f64).collect()
            })
            .collect()
    };
    let (cl, th) = (draw(false), draw(true));
    let mut worst_z = 0.0f64;
    for k in 0..3 {
        let a: Vec<f64> = cl.iter().map(|c| c[k]).collect();
        let b: Vec<f64> = th.iter().map(|c| c[k]).collect();
        let ((ma, sa), (mb, sb)) = (mean_sd(&a), mean_sd(&b));
        let z_mean = (ma - mb).abs() / ((sa * sa + sb * sb) / reps as f64).sqrt();
        let z_var = (sa * sa - sb * sb).abs() / (variance_se(&a).powi(2) + variance_se(&b).powi(2)).sqrt();
        worst_z = worst_z.max(z_mean).max(z_var);
    }
    let agree = worst_z <= SE_BAND;
    outcome(
        gof && rate_ok && agree,
        format!(
            "Poisson GOF p={p:.3} (> {GOF_P}); rate {m:.4} vs 2 (|z|={:.2}); cluster/thinning max |z|={worst_z:.2} (<= {SE_BAND})",
            (m - 2.0).abs() / se
        ),
    )
}

fn criterion_4() -> Outcome {
    let options = DiagnoseOptions {
        replicates: MOMENT_REPLICATES,
        ..DiagnoseOptions::default()
    };
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in [1, 3, 10] {
        let truth = canonical_truth(k).unwrap();
        let rows = moment_checks(&format!("canonical-{k}"), &truth, &options, Seed::new(404, k as u64)).unwrap();
        for r in rows.iter().filter(|r| r.check != "rate_vs_mu") {
            checked += 1;
            worst = worst.max(r.statistic / r.bound);
            if !r.pass {
                failed.push(format!("{}:{}:{:?}", r.truth, r.check, r.component));
            }
        }
    }
    outcome(
        failed.is_empty(),
        format!("{checked} one-sided checks, largest statistic/bound {worst:.3e}; failed {failed:?}"),
    )
}

fn criterion_5() -> Outcome {
    let options = DiagnoseOptions {
        ergodic_horizons: vec![2500.0, 10_000.0],
        ergodic_replicates: ERGODIC_REPLICATES,
        ..DiagnoseOptions::default()
    };
    let f = canonical_truth(10).unwrap().params;
    let rows = ergodic_checks("canonical-10", &f, &options, Seed::new(505, 0)).unwrap();
    let ratio = rows.iter().find(|r| r.check == "ergodic_ratio").unwrap().statistic;
    let meds: Vec<f64> = rows
        .iter()
        .filter(|r| r.check == "ergodic_median")
        .map(|r| r.statistic)
        .collect();
    outcome(
        ratio >= ERGODIC_RATIO.0 && ratio <= ERGODIC_RATIO.1,
        format!(
            "medians {:.4} -> {:.4}, ratio {ratio:.3} (band [{}, {}])",
            meds[0], meds[1], ERGODIC_RATIO.0, ERGODIC_RATIO.1
        ),
    )
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    d * n.sqrt()
}

fn criterion_6() -> Outcome {
    let dim = 5;
    let size = SizePriorSpec::TruncatedPoisson { mean: 1.5, cap: 5 };
    let (alpha, max_bins) = (1.0, 10);
    let nu_prior = NuPriorSpec::with_mean(1.0);
    let spec = PriorSpec {
        horizon: 1.0,
        size: size.clone(),
        kernel: KernelPriorSpec::Histogram(HistPriorSpec {
            mean: 2.0,
            alpha,
            max_bins,
            sup_cap: None,
        }),
        nu: nu_prior,
    };
    let priors = Priors::new(spec, dim).unwrap();
    // T = 0 and no events: the likelihood is identically 1
    let events = EventData::empty(dim, -1.0, 0.0).unwrap();
    let thin = 50;
    let config = McmcConfig {
        iterations: 10_000 + PRIOR_DRAWS * thin,
        burn_in: 10_000,
        thin,
        adapt: false,
        ..McmcConfig::default()
    };
    let sample = run_chain(0, &events, 0.0, &priors, &config, Seed::new(606, 0)).unwrap();
    let n = sample.draws.len() as f64;
    let mut sizes = vec![0.0; dim + 1];
    let mut bins = vec![0.0; max_bins + 1];
    let mut masses = Vec::new();
    for d in &sample.draws {
        sizes[d.kernels().len()] += 1.0;
        // one kernel per draw keeps the mass sample free of within-draw ties
        if let Some(h) = d.kernels().values().next() {
            bins[h.as_histogram().unwrap().bin_count()] += 1.0;
            masses.push(h.mass());
        }
    }
    let size_pmf = size.log_pmf_table().unwrap();
    let tv_size = (0..=dim).map(|s| (sizes[s] / n - size_pmf[s].exp()).abs()).sum::<f64>() / 2.0;
    let bin_pmf: Vec<f64> = (0..=max_bins)
        .map(|i| if i == 0 { 0.0 } else { priors.count_log_pmf(i).exp() })
        .collect();
    let nb: f64 = bins.iter().sum();
    let tv_bins = (1..=max_bins).map(|i| (bins[i] / nb - bin_pmf[i]).abs()).sum::<f64>() / 2.0;
    // ∫h = 1 - w_0 with (w_0, ..., w_I) ~ Dirichlet(α): Beta(Iα, α) given I
    let mass_laws: Vec<Beta> = (1..=max_bins)
        .map(|i| Beta::new(i as f64 * alpha, alpha).unwrap())
        .collect();
    let ks_mass = ks_statistic(masses, |x| {
        (1..=max_bins).map(|i| bin_pmf[i] * mass_laws[i - 1].cdf(x)).sum()
    });
    let gamma = Gamma::new(nu_prior.shape, nu_prior.rate).unwrap();
    let ks_nu = ks_statistic(sample.draws.iter().map(ComponentParams::nu).collect(), |x| gamma.cdf(x));
    outcome(
        tv_size <= TV_TOL && tv_bins <= TV_TOL && ks_mass <= KS_CRIT && ks_nu <= KS_CRIT,
        format!(
            "{} draws; TV |S| {tv_size:.4}, TV I {tv_bins:.4} (tol {TV_TOL}); KS sqrt(n)D mass {ks_mass:.3}, nu {ks_nu:.3} (crit {KS_CRIT})",
            sample.draws.len()
        ),
    )
}

/// Batch-means standard error of the mean of `f(x)` along a chain.
fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let (_, sd) = mean_sd(&means);
    sd / (means.len() as f64).sqrt()
}

fn criterion_7() -> Outcome {
    let (nu_true, horizon) = (1.5, 200.0);
    let f0 = NetworkParams::new(1.0, vec![ComponentParams::background(nu_true).unwrap()]).unwrap();
    let (events, _) = simulate_cluster(&f0, horizon, Seed::new(707, 0)).unwrap();
    let n = events.count(0, 0.0, horizon) as f64;
    let nu_prior = NuPriorSpec { shape: 2.0, rate: 1.0 };
    let spec = PriorSpec {
        horizon: 1.0,
        size: SizePriorSpec::TruncatedUniform { cap: 1 },
        kernel: KernelPriorSpec::Histogram(HistPriorSpec {
            mean: 2.0,
            alpha: 1.0,
            max_bins: 10,
            sup_cap: None,
        }),
        nu: nu_prior,
    };
    let priors = Priors::new(spec, 1).unwrap();
    let config = McmcConfig {
        iterations: 205_000,
        burn_in: 5_000,
        thin: 5,
        moves: MoveProbabilities {
            nu: 1.0,
            heights: 0.0,
            bins: 0.0,
            add_edge: 0.0,
            remove_edge: 0.0,
            swap_edge: 0.0,
        },
        ..McmcConfig::default()
    };
    let sample = run_chain_fixed_graph(0, &events, horizon, &priors, &config, Seed::new(708, 0), &[], None).unwrap();
    let xs: Vec<f64> = sample.draws.iter().map(ComponentParams::nu).collect();
    let (shape, rate) = (nu_prior.shape + n, nu_prior.rate + horizon);
    let (exact_mean, exact_var) = (shape / rate, shape / (rate * rate));
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let v = sq.iter().sum::<f64>() / (xs.len() - 1) as f64;
    let (se_m, se_v) = (batch_se(&xs, 50), batch_se(&sq, 50));
    let (z_m, z_v) = ((m - exact_mean).abs() / se_m, (v - exact_var).abs() / se_v);
    outcome(
        z_m <= SE_BAND && z_v <= SE_BAND,
        format!(
            "n={n}; mean {m:.5} vs {exact_mean:.5} (|z|={z_m:.2}); variance {v:.3e} vs {exact_var:.3e} (|z|={z_v:.2})"
        ),
    )
}

const SCENARIO: &str = r#"
name = "desk-scale contraction"
seed = 20240611
horizons = [250.0, 500.0, 1000.0, 2000.0]
replicates = 20

[truth]
kind = "generator"
dimension = 10
sparsity = 2
mass_range = [0.4, 0.4]
nu_range = [0.5, 0.5]
kernel_horizon = 1.0
target_radius = 0.8
shape = { kind = "step", profile = [3.0, 1.0] }

[prior]
size = { kind = "truncated-poisson", mean = 2.0, cap = 10 }
kernel = { kind = "histogram", mean = 2.0, alpha = 1.0, max_bins = 16 }
nu = { shape = 2.0, rate = 4.0 }

[mcmc]
iterations = 10000
burn_in = 5000
thin = 5

[threshold]
kind = "auto"
c_u = 0.1

[study]
loss_draws = 200
refit_horizons = [2000.0]
"#;

fn scenario() -> &'static RateStudy {
    static STUDY: OnceLock<RateStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let config = ExperimentConfig::from_toml(SCENARIO).unwrap();
        rate_study(&config).unwrap()
    })
}

fn criterion_8() -> Outcome {
    let study = scenario();
    let meds: Vec<f64> = study.summary.iter().map(|s| s.d1t_median).collect();
    let decreasing = meds.windows(2).all(|w| w[1] < w[0]);
    let slope = study.d1t_slope.unwrap_or(f64::NAN);
    outcome(
        decreasing && slope <= SLOPE_MAX && study.failures.is_empty(),
        format!(
            "median d1T {meds:.4?}; log-log slope {slope:.3} (<= {SLOPE_MAX}); {} failed fits",
            study.failures.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let study = scenario();
    let rows = &study.two_step;
    let exact = rows.iter().filter(|r| r.exact_recovery).count() as f64 / rows.len().max(1) as f64;
    let full = median(&rows.iter().map(|r| r.full_l1_median).collect::<Vec<_>>());
    let refit = median(&rows.iter().map(|r| r.refit_l1_median).collect::<Vec<_>>());
    let threshold = rows.first().map_or(f64::NAN, |r| r.threshold);
    outcome(
        !rows.is_empty() && exact >= RECOVERY_MIN && refit <= REFIT_RATIO * full,
        format!(
            "{} pairs at T=2000, u_T={threshold:.4}; exact recovery {exact:.3} (>= {RECOVERY_MIN}); median L1 refit {refit:.4} vs full {full:.4} (ratio {:.3}, <= {REFIT_RATIO})",
            rows.len(),
            refit / full
        ),
    )
}

fn criterion_10() -> Outcome {
    // masses and thresholds in integer units of 0.025 decide the separation
    // condition exactly; select_graph sees the decimal floats
    let k = 5;
    let unit = 0.05;
    let mut checked = 0u64;
    let mut violations = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let rho: Vec<f64> = idx.iter().map(|i| *i as f64 * unit).collect();
        for subset in 0u32..(1 << k) {
            let inside = |l: usize| subset & (1 << l) != 0;
            let min_in = (0..k)
                .filter(|l| inside(*l))
                .map(|l| 2 * idx[l])
                .min()
                .unwrap_or(usize::MAX);
            let out_sum: usize = (0..k).filter(|l| !inside(*l)).map(|l| 2 * idx[l]).sum();
            for u_half in 1..=GRID_UNITS {
                // u = u_half * 0.025 = u_half half-units
                if min_in >= 2 * u_half && u_half >= out_sum {
                    checked += 1;
                    let got = select_graph(&rho, u_half as f64 * unit / 2.0);
                    let want: Vec<usize> = (0..k).filter(|l| inside(*l)).collect();
                    if got != want && violations.len() < 5 {
                        violations.push(format!("rho={rho:?} u={} got {got:?}", u_half as f64 * unit / 2.0));
                    }
                }
            }
        }
        let mut pos = 0;
        while pos < k && idx[pos] == GRID_UNITS {
            idx[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
        idx[pos] += 1;
    }
    outcome(
        violations.is_empty() && checked > 0,
        format!("{checked} separated (mass vector, S0, u) cases; violations {violations:?}"),
    )
}

const DETERMINISM: &str = r#"
name = "determinism"
seed = 99
horizons = [100.0, 200.0]
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
iterations = 2000
burn_in = 500
thin = 5

[study]
refit_horizons = [200.0]
"#;

fn run_into(dir: &Path, workers: usize) -> Vec<(String, Vec<u8>)> {
    let mut config = ExperimentConfig::from_toml(DETERMINISM).unwrap();
    config.workers = workers;
    let study = rate_study(&config).unwrap();
    let files = write_rate_study(dir, &config, &study).unwrap();
    [
        files.rows,
        files.summary,
        files.two_step,
        files.failures,
        files.plot,
        files.truth,
    ]
    .iter()
    .map(|p| {
        (
            p.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(p).unwrap(),
        )
    })
    .collect()
}

fn data_lines(bytes: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(bytes)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn criterion_11() -> Outcome {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let first = run_into(dirs[0].path(), 1);
    let again = run_into(dirs[1].path(), 1);
    // the worker count is echoed in the header, so compare data rows only
    let parallel = run_into(dirs[2].path(), 3);
    let differing: Vec<&String> = first
        .iter()
        .zip(&again)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| &x.0)
        .collect();
    let schedule_dependent: Vec<&String> = first
        .iter()
        .zip(&parallel)
        .filter(|(x, y)| data_lines(&x.1) != data_lines(&y.1))
        .map(|(x, _)| &x.0)
        .collect();
    outcome(
        differing.is_empty() && schedule_dependent.is_empty(),
        format!(
            "{} files; byte-identical re-run: differing {differing:?}; 1 vs 3 workers: differing rows {schedule_dependent:?}",
            first.len()
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "likelihood exactness", criterion_1),
        (2, "Poisson closed form", criterion_2),
        (3, "simulator law checks", criterion_3),
        (4, "moment bounds Monte Carlo", criterion_4),
        (5, "ergodic scaling", criterion_5),
        (6, "RJ-MCMC prior recovery", criterion_6),
        (7, "conjugate background posterior", criterion_7),
        (8, "desk-scale contraction", criterion_8),
        (9, "two-step recovery", criterion_9),
        (10, "select_graph oracle consistency", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (n, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} [{name}]: {verdict} - {} ({:.1}s)",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failures += usize::from(!o.pass);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
