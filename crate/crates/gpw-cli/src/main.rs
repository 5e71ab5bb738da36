//! `gpw` — estimate projected Wasserstein distances and reproduce the
//! synthetic experiments as CSV artifacts.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpw_core::measure::sample_lowrank_gaussian;
use gpw_core::rng::derive_seed;
use gpw_core::{DiscreteMeasure, Error, GaussianSpec, Result};

use config::{Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "gpw", version, about = "Projected Wasserstein distance estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one distance estimation and emit the result as JSON.
    Compute(ComputeArgs),
    /// Estimate quality vs latent dimension k (CSV).
    Estimation(ExperimentArgs),
    /// Clean vs noisy normalized distances for both methods (CSV).
    Noise(ExperimentArgs),
    /// Normalized distance and relative runtime vs ambient dimension (CSV).
    Dimension(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// CI-sized: n = 200, 5 runs, 300 iterations.
    Desk,
    /// Reported sizes: n = 500, 20 runs, 500 iterations.
    Paper,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// JSON config overlay (fields replace preset values).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for all derived streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComputeArgs {
    /// First measure as CSV (`w,x0,...`).
    #[arg(long, requires = "nu")]
    mu: Option<PathBuf>,
    /// Second measure as CSV.
    #[arg(long, requires = "mu")]
    nu: Option<PathBuf>,
    /// Ambient dimension for synthetic Gaussian input.
    #[arg(long, conflicts_with = "mu")]
    dim: Option<usize>,
    /// Covariance rank for synthetic input.
    #[arg(long)]
    rank: Option<usize>,
    /// Atoms per synthetic measure.
    #[arg(long)]
    n: Option<usize>,
    /// Latent dimension.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_config(
    exp: Experiment,
    preset: Preset,
    config: Option<&PathBuf>,
    seed: Option<u64>,
    jobs: Option<usize>,
) -> Result<ExperimentConfig> {
    let mut cfg = match preset {
        Preset::Desk => ExperimentConfig::desk(exp),
        Preset::Paper => ExperimentConfig::paper(exp),
    };
    if let Some(path) = config {
        cfg = cfg.merge_file(path)?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = jobs {
        cfg.jobs = jobs.max(1);
    }
    cfg.validate(exp)?;
    Ok(cfg)
}

fn load_compute_measures(args: &ComputeArgs, cfg: &ExperimentConfig) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    match (&args.mu, &args.nu) {
        (Some(mu_path), Some(nu_path)) => {
            let mu = DiscreteMeasure::load_csv(mu_path)?;
            let nu = DiscreteMeasure::load_csv(nu_path)?;
            Ok((mu, nu))
        }
        _ => {
            let dim = args.dim.unwrap_or(cfg.d);
            let rank = args.rank.unwrap_or(cfg.rank.min(dim));
            let n = args.n.unwrap_or(cfg.n);
            let mu = sample_lowrank_gaussian(&GaussianSpec {
                dim,
                rank,
                n_samples: n,
                seed: derive_seed(cfg.seed, 0),
            })?;
            let nu = sample_lowrank_gaussian(&GaussianSpec {
                dim,
                rank,
                n_samples: n,
                seed: derive_seed(cfg.seed, 1),
            })?;
            Ok((mu, nu))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compute(args) => {
            let mut cfg = resolve_config(
                Experiment::Compute,
                args.preset,
                args.config.as_ref(),
                args.seed,
                None,
            )?;
            if let Some(k) = args.k {
                cfg.k = k;
                cfg.gpw.k = k;
            }
            let (mu, nu) = load_compute_measures(&args, &cfg)?;
            let json = experiments::run_compute(&mu, &nu, &cfg)?;
            let text = serde_json::to_string_pretty(&json).expect("result serializes");
            match &args.out {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Estimation(args) => {
            let cfg = resolve_config(
                Experiment::Estimation,
                args.preset,
                args.config.as_ref(),
                args.seed,
                args.jobs,
            )?;
            let outcome = experiments::run_estimation(&cfg)?;
            experiments::write_table(args.out.as_deref(), &cfg.echo_json(), outcome.header, &outcome.rows)
        }
        Command::Noise(args) => {
            let cfg = resolve_config(
                Experiment::Noise,
                args.preset,
                args.config.as_ref(),
                args.seed,
                args.jobs,
            )?;
            let outcome = experiments::run_noise(&cfg)?;
            experiments::write_table(args.out.as_deref(), &cfg.echo_json(), outcome.header, &outcome.rows)
        }
        Command::Dimension(args) => {
            let cfg = resolve_config(
                Experiment::Dimension,
                args.preset,
                args.config.as_ref(),
                args.seed,
                args.jobs,
            )?;
            let outcome = experiments::run_dimension(&cfg)?;
            experiments::write_table(args.out.as_deref(), &cfg.echo_json(), outcome.header, &outcome.rows)
        }
    }
}

/// Exit codes: 2 for configuration/input problems, 3 for solver failures.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NotConverged { .. } | Error::OracleTooLarge { .. } | Error::TooLarge { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
