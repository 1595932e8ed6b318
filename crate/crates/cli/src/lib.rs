//! Experiment driver behind the `riesz` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use commands::Status;
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "riesz",
    version,
    about = "Two-weight experiments for fractional integrals on dyadic meshes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment document; without it a standard configuration is used.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random corpus.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Mesh override, e.g. `n=1,J=0,L=8,T=40`; omitted keys keep their value.
    #[arg(long, global = true)]
    pub mesh: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Weight characteristics for every configured weight and exponent tuple.
    Constants,
    /// Exact sparsity, overlap, domination, comparison and corona suites.
    Verify,
    /// Norm estimates against testing constants and characteristic bounds.
    Sandwich,
    /// Build and certify stopping-time sparse families.
    Sparse,
    /// Corona decompositions with certificates, Carleson and decay tables.
    Corona,
    /// Lower bounds on operator norms.
    Norm,
    /// Log-log slope of weak norms against the A_s characteristic.
    ExponentFit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Verify => "verify",
            Command::Sandwich => "sandwich",
            Command::Sparse => "sparse",
            Command::Corona => "corona",
            Command::Norm => "norm",
            Command::ExponentFit => "exponent-fit",
        }
    }
}

/// Config load failures, reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error(transparent)]
pub struct ConfigError(#[from] pub anyhow::Error);

/// Resolves the configuration from file and flags.
pub fn resolve_config(cli: &Cli) -> std::result::Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::standard(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(m) = &cli.mesh {
        cfg.mesh.apply_flag(m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and writes its outputs.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Status> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()?;
    let outcome = pool.install(|| match command {
        Command::Constants => commands::constants(cfg),
        Command::Verify => commands::verify(cfg),
        Command::Sandwich => commands::sandwich(cfg),
        Command::Sparse => commands::sparse(cfg),
        Command::Corona => commands::corona(cfg),
        Command::Norm => commands::norm(cfg),
        Command::ExponentFit => commands::exponent_fit(cfg),
    })?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if command == Command::Verify {
        for row in outcome.summary.rows.iter().filter(|r| r[2] == "false") {
            eprintln!("FAIL [{}] {}: {}", row[0], row[1], row[3]);
        }
    }
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    output::write_outputs(
        &dir,
        command.name(),
        &outcome.records,
        &outcome.summary,
        outcome.plot.as_ref(),
    )?;
    Ok(outcome.status)
}
