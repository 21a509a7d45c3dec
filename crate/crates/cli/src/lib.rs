//! The `e2m` command-line runner: simulate censored samples with soft labels,
//! fit a dataset, or run bias sweeps over the mean error probability or the
//! sample size.
//!
//! Exit codes: 0 success, 2 configuration error, 3 not converged,
//! 4 estimation failure (degenerate likelihood, starved component), 5 I/O error.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Command, FileConfig, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "e2m", version, about = "Evidential-EM estimation for censored Rayleigh mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Simulate a censored sample and its soft labels.
    Generate(Common),
    /// Fit a mixture to a dataset and a soft-label file.
    Fit(FitArgs),
    /// Run replicated fits over a grid and summarize the bias.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Number of units on test.
    #[arg(long)]
    pub n: Option<usize>,
    /// Fraction of units withdrawn at the last failure.
    #[arg(long)]
    pub censor_frac: Option<f64>,
    /// Mean label error probability.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Replications per grid point and method.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_parser = ["uncertain", "noisy", "unknown", "all"])]
    pub method: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: one per processor).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Relative log-likelihood tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV written by `generate` (or in the same format).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Soft-label CSV: item_id, pl_1, ..., pl_p.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Swept quantity.
    #[arg(long, value_parser = ["rho", "n"])]
    pub variable: Option<String>,
    /// Also draw figure_xi_k.svg.
    #[arg(long)]
    pub svg: bool,
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        n: c.n,
        censor_frac: c.censor_frac,
        rho: c.rho,
        reps: c.reps,
        method: c.method.clone(),
        out: c.out.clone(),
        workers: c.workers,
        tol: c.tol,
        max_iters: c.max_iters,
        ..Overrides::default()
    }
}

/// Resolves the configuration for a parsed command line.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let (command, common, o) = match &cli.command {
        Commands::Generate(c) => (Command::Generate, c, overrides(c)),
        Commands::Fit(a) => {
            let mut o = overrides(&a.common);
            o.dataset = a.dataset.clone();
            o.labels = a.labels.clone();
            (Command::Fit, &a.common, o)
        }
        Commands::Sweep(a) => {
            let mut o = overrides(&a.common);
            o.variable = a.variable.clone();
            o.svg = a.svg;
            (Command::Sweep, &a.common, o)
        }
    };
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    RunConfig::resolve(command, file, &o)
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = resolve(cli)?;
    commands::execute(&cfg)
}
