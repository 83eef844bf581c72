mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "sparsecrb", version, about = "Cramér-Rao bounds and estimators for sparse linear models")]
struct Cli {
    /// TOML file with default values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bound on the covariance of unbiased estimators at a sparse point.
    Crb(CrbArgs),
    /// Run one estimator on a measurement vector.
    Estimate(EstimateArgs),
    /// Monte Carlo MSE over a grid of noise levels.
    SweepSnr(SweepArgs),
    /// Monte Carlo MSE over a grid of support sizes.
    SweepSparsity(SweepArgs),
    /// Coherence, spark and column norms of a dictionary.
    Diagnose(DiagnoseArgs),
}

/// Where the dictionary comes from: a matrix file or a seeded random draw.
#[derive(Debug, Args, Clone, Default)]
pub struct DictArgs {
    /// Dictionary matrix file.
    #[arg(long, value_name = "FILE", conflicts_with = "gen")]
    pub dict: Option<PathBuf>,
    /// Draw an m x p Gaussian dictionary with unit-norm columns.
    #[arg(long, value_name = "M,P")]
    pub gen: Option<String>,
    /// Seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CrbArgs {
    #[command(flatten)]
    pub dict: DictArgs,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Sparsity level.
    #[arg(long)]
    pub s: Option<usize>,
    /// True parameter file; drawn from the seed when absent.
    #[arg(long, value_name = "FILE")]
    pub alpha: Option<PathBuf>,
    /// Nonzeros of a drawn parameter (defaults to s).
    #[arg(long)]
    pub nnz: Option<usize>,
    /// Bias gradient restricted to the feasible subspace, `BU`.
    #[arg(long, value_name = "FILE")]
    pub bias: Option<PathBuf>,
    /// Measurement matrix A; the dictionary then plays the role of D and the
    /// bound is for the signal x = D alpha.
    #[arg(long, value_name = "FILE")]
    pub signal_a: Option<PathBuf>,
    /// Write the bound matrix here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub dict: DictArgs,
    /// Measurement vector file.
    #[arg(long, value_name = "FILE")]
    pub y: Option<PathBuf>,
    /// One of oracle, ls, ml, bpdn, ds, gds, gauss-bpdn.
    #[arg(long, visible_alias = "estimators")]
    pub estimator: Option<String>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Support for the oracle, 1-based, comma separated.
    #[arg(long, value_name = "I,J,...")]
    pub support: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Derive tau and gamma from sigma, p and s.
    #[arg(long)]
    pub paper_rule: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Write the estimate here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dictionary size.
    #[arg(long, value_name = "M,P")]
    pub gen: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sparsity level (SNR sweep) or noise level (sparsity sweep).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Grid override: noise levels for sweep-snr, support sizes for sweep-sparsity.
    #[arg(long, value_name = "V,V,...")]
    pub grid: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_name = "NAME,...")]
    pub estimators: Option<String>,
    /// Regularization from sigma, p and s (the default when no tau/gamma is given).
    #[arg(long)]
    pub paper_rule: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Reuse one dictionary for every trial.
    #[arg(long)]
    pub fixed_dict: bool,
    /// CSV destination; the CSV goes to standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub dict: DictArgs,
    #[arg(long)]
    pub s: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(usage) = e.downcast_ref::<commands::Usage>() {
                eprintln!("\n{}", usage_for(usage.0));
            }
            ExitCode::from(1)
        }
    }
}

fn usage_for(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match cmd.find_subcommand_mut(sub) {
        Some(sc) => sc.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Crb(a) => commands::crb(a, &file),
        Command::Estimate(a) => commands::estimate(a, &file),
        Command::SweepSnr(a) => commands::sweep(a, &file, commands::SweepKind::Snr),
        Command::SweepSparsity(a) => commands::sweep(a, &file, commands::SweepKind::Sparsity),
        Command::Diagnose(a) => commands::diagnose(a, &file),
    }
}
