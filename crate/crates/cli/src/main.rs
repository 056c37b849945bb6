//! Experiment CLI for the spherical stochastic heat equation solvers.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::Config;
use output::config_hash;

#[derive(Parser)]
#[command(
    name = "sphere-spde",
    about = "Convergence experiments for the stochastic heat equation on the unit sphere",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (`key = value` lines, `#` comments,
    /// comma-separated lists).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/SVG/PPM artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the worker thread pool (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Accept runs whose printed memory/time estimate is large.
    #[arg(long)]
    allow_expensive: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral truncation convergence sweeps.
    Spectral(Common),
    /// Euler-Maruyama time-stepping convergence sweeps.
    Em(Common),
    /// Certification sweeps for the exponential/regularity inequalities.
    Bounds(Common),
    /// Solution field snapshots on an equiangular grid.
    Snapshot(Common),
    /// Closed-form moment time series.
    Moments(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Spectral(c)
            | Command::Em(c)
            | Command::Bounds(c)
            | Command::Snapshot(c)
            | Command::Moments(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Spectral(_) => "spectral",
            Command::Em(_) => "em",
            Command::Bounds(_) => "bounds",
            Command::Snapshot(_) => "snapshot",
            Command::Moments(_) => "moments",
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = cli.command.common();

    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the worker pool")?;
    }
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output directory {}", common.out.display()))?;

    let mut cfg = Config::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.set("seed", seed.to_string());
    }

    match &cli.command {
        Command::Spectral(c) => commands::spectral::run(&mut cfg, &c.out, c.allow_expensive)?,
        Command::Em(c) => commands::em::run(&mut cfg, &c.out, c.allow_expensive)?,
        Command::Bounds(c) => commands::bounds::run(&mut cfg, &c.out)?,
        Command::Snapshot(c) => {
            let canonical = cfg.canonical("snapshot");
            commands::snapshot::run(&mut cfg, &c.out, c.allow_expensive, &canonical)?
        }
        Command::Moments(c) => commands::moments::run(&mut cfg, &c.out)?,
    }

    // provenance stamp: artifacts are a pure function of this text
    let canonical = cfg.canonical(cli.command.name());
    let meta = format!("config_hash = {}\n\n{canonical}", config_hash(&canonical));
    std::fs::write(common.out.join("config.meta"), meta)?;
    Ok(())
}
