use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use log::info;
use tci_spde::experiment::{run, ExperimentConfig, Subcommand};

/// Environment variable holding the number of replicate workers.
const WORKERS_ENV: &str = "TCI_SPDE_WORKERS";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Audit,
    Constants,
    Simulate,
    VerifyT2,
    VerifyT1,
    Inequalities,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Audit => Subcommand::Audit,
            Command::Constants => Subcommand::Constants,
            Command::Simulate => Subcommand::Simulate,
            Command::VerifyT2 => Subcommand::VerifyT2,
            Command::VerifyT1 => Subcommand::VerifyT1,
            Command::Inequalities => Subcommand::Inequalities,
        }
    }
}

/// Simulate stochastic PDEs and check transportation cost inequalities.
///
/// The exit status is 0 when no verdict failed, 1 when at least one
/// verdict failed, and 2 on configuration or runtime errors. The number of
/// worker threads is read from TCI_SPDE_WORKERS (default: all cores).
#[derive(Debug, Parser)]
#[command(name = "tci-spde", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `outputs`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))?;
    anyhow::ensure!(n > 0, "{WORKERS_ENV} must be a positive integer, got {raw:?}");
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<usize> {
    configure_workers()?;
    let mut cfg = ExperimentConfig::from_path(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.experiment_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.outputs = out.clone();
    }
    let sub = Subcommand::from(cli.command);
    info!(
        "running {} with seed {} on {} workers",
        sub.name(),
        cfg.experiment_seed,
        rayon::current_num_threads()
    );
    let output = run(sub, &cfg).with_context(|| format!("{} failed (experiment_seed {})", sub.name(), cfg.experiment_seed))?;
    let path = output.write(&cfg.outputs)?;
    for v in &output.verdicts {
        println!("{:<40} {:?}", v.name, v.verdict);
    }
    let failures = output.failures();
    println!("report: {} ({failures} failed)", path.display());
    Ok(failures)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
