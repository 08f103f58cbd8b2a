mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

/// Fit Bayesian illness-death models with shared frailty and estimate
/// survivor average causal effects for semicompeting risks.
#[derive(Debug, Parser)]
#[command(name = "semicomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known potential outcomes.
    Simulate,
    /// Propensity-score matching and covariate standardization.
    Preprocess,
    /// Sample the posterior with NUTS.
    Fit,
    /// Impute potential outcomes and summarize the causal estimands.
    Estimate,
    /// Posterior predictive checks.
    Ppc,
    /// Summary JSON and plot-ready tables.
    Report,
}

#[derive(Debug, Args)]
struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Observed data CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long, global = true)]
    iter: Option<usize>,
    #[arg(long, global = true)]
    warmup: Option<usize>,
    /// Comma-separated grid times.
    #[arg(long, global = true, value_parser = config::parse_grid, conflicts_with_all = ["grid_max", "grid_k"])]
    grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    grid_max: Option<f64>,
    #[arg(long, global = true)]
    grid_k: Option<usize>,
    /// Posterior draws used for imputation (0 keeps all).
    #[arg(long, global = true)]
    draws: Option<usize>,
}

fn run(cli: &Cli) -> semicomp::Result<()> {
    let f = &cli.flags;
    let overrides = Overrides {
        seed: f.seed,
        out: f.out.clone(),
        input: f.input.clone(),
        chains: f.chains,
        iter: f.iter,
        warmup: f.warmup,
        grid: f.grid.clone(),
        grid_max: f.grid_max,
        grid_k: f.grid_k,
        draws: f.draws,
    };
    let cfg = RunConfig::load(f.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Preprocess => commands::preprocess_cmd(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Ppc => commands::ppc(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
