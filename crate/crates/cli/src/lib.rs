//! The `metroepi` command line: a staged pipeline from trip records to
//! epidemic risk and network reports.

pub mod commands;
pub mod config;
pub mod stage;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "metroepi", version, about = "Epidemic risk on transit mobility networks")]
pub struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output tree; each command writes one subdirectory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic city (stations, districts, trips).
    Synth,
    /// Validate raw inputs, select the week, allocate populations.
    Ingest,
    /// Build hourly, period and weekly flow matrices.
    Matrices,
    /// Run one introduction scenario.
    Simulate,
    /// Run the scenario grid and summarise per-location risk.
    Sweep,
    /// Temporal coherence, centralities and period correlations.
    Network,
    /// Louvain communities per period and day-to-day transitions.
    Communities,
    /// Daily activity motifs, recreational fraction, top destinations.
    Activity,
    /// Collate summary tables from finished stages.
    Report,
    /// Every stage in order.
    Pipeline,
}

/// Reads and validates the configuration. Errors here are usage errors.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    }
    .with_seed(cli.seed);
    config.validate()?;
    Ok(config)
}

pub fn execute(cli: &Cli, config: &RunConfig) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .context("starting worker pool")?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    pool.install(|| {
        match cli.command {
            Command::Synth => commands::synth(config, out)?,
            Command::Ingest => commands::ingest(config, out)?,
            Command::Matrices => commands::matrices(config, out)?,
            Command::Simulate => commands::simulate(config, out)?,
            Command::Sweep => commands::run_sweep(config, out)?,
            Command::Network => commands::network(config, out)?,
            Command::Communities => commands::communities(config, out)?,
            Command::Activity => commands::activity(config, out)?,
            Command::Report => commands::report(config, out)?,
            Command::Pipeline => {
                commands::pipeline(config, out)?;
                return Ok(());
            }
        };
        Ok(())
    })
}
