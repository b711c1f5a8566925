use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(
    name = "hawkes",
    version,
    about = "Sparse multivariate Hawkes processes: simulate, fit, select graphs, run studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate event files from a parameter file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long)]
        out: PathBuf,
        /// `cluster` or `thinning`.
        #[arg(long, default_value = "cluster")]
        method: String,
        /// Burn-in before time 0 for thinning (defaults to 20 kernel supports).
        #[arg(long)]
        warmup: Option<f64>,
    },
    /// Posterior sampling for one or all components.
    Fit {
        /// Prior and sampler configuration.
        #[arg(long, alias = "params-prior")]
        prior: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        horizon: f64,
        /// `all` or a component index.
        #[arg(long, default_value = "all")]
        components: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Graph selection by thresholding posterior masses, then a conditional refit.
    TwoStep {
        #[arg(long, alias = "params-prior")]
        prior: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        horizon: f64,
        /// `auto` or a positive number.
        #[arg(long, default_value = "auto")]
        threshold: String,
        #[arg(long, default_value = "all")]
        components: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Losses of an estimate (parameter file or draw file) against the truth.
    Loss {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log-likelihood of one component, printed with 17 significant digits.
    Loglik {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        component: usize,
        #[arg(long)]
        horizon: f64,
    },
    /// Contraction study over a grid of horizons.
    RateStudy {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `workers` of the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Monte Carlo checks of the moment bounds and ergodic scaling.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (defaults to `<output_dir>/diagnostics.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            params,
            horizon,
            seed,
            replicates,
            out,
            method,
            warmup,
        } => commands::simulate(&params, horizon, seed, replicates, &out, &method, warmup),
        Command::Fit {
            prior,
            events,
            horizon,
            components,
            seed,
            out,
        } => commands::fit(&prior, &events, horizon, &components, seed, &out),
        Command::TwoStep {
            prior,
            events,
            horizon,
            threshold,
            components,
            seed,
            out,
        } => commands::two_step(&prior, &events, horizon, &threshold, &components, seed, &out),
        Command::Loss {
            truth,
            estimate,
            events,
            horizon,
            out,
        } => commands::loss(&truth, &estimate, &events, horizon, &out),
        Command::Loglik {
            params,
            events,
            component,
            horizon,
        } => commands::loglik(&params, &events, component, horizon),
        Command::RateStudy { config, out, workers } => commands::rate_study(&config, out, workers),
        Command::Diagnose { config, out } => commands::diagnose(&config, out),
    }
}
