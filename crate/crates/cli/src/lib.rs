//! Command-line front end: strict JSON experiment configs, the six
//! experiment commands, and reproducible output directories.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Context, EquilibriumChoice, Outcome};
use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "suballoc", version, about = "Distributed sub-optimal resource allocation experiments")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Seed for any sampling (recorded in the manifest).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EquilibriumMethodArg {
    Newton,
    Phi,
    ClosedForm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Graph predicates and Laplacian spectrum. Exits 4 if the graph is not
    /// weight-balanced and strongly connected.
    CheckGraph,
    /// Optimal allocation and multiplier of the centralized problem.
    Solve,
    /// Equilibrium of the ε-dynamics and its gap to the optimum.
    Equilibrium {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_enum, default_value = "newton")]
        method: EquilibriumMethodArg,
    },
    /// Integrate the configured algorithm and write the trajectory.
    Simulate,
    /// Equilibrium gaps over a decreasing ε grid.
    Sweep {
        /// Comma-separated, strictly decreasing.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Full ε-dynamics against the reduced model.
    Compare {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        boundary_cutoff: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CheckGraph => "check-graph",
            Self::Solve => "solve",
            Self::Equilibrium { .. } => "equilibrium",
            Self::Simulate => "simulate",
            Self::Sweep { .. } => "sweep",
            Self::Compare { .. } => "compare",
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let config = ExperimentConfig::load(path)?;
    let ctx = Context::new(&config, &cli.out, cli.seed)?;
    match &cli.command {
        Command::CheckGraph => commands::check_graph(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Equilibrium { eps, method } => {
            let method = match method {
                EquilibriumMethodArg::Newton => EquilibriumChoice::Newton,
                EquilibriumMethodArg::Phi => EquilibriumChoice::Phi,
                EquilibriumMethodArg::ClosedForm => EquilibriumChoice::ClosedForm,
            };
            commands::equilibrium(&ctx, *eps, method)
        }
        Command::Simulate => commands::simulate(&ctx),
        Command::Sweep { eps, workers } => {
            let grid = eps.clone().unwrap_or_else(|| commands::DEFAULT_SWEEP_GRID.to_vec());
            commands::sweep(&ctx, &grid, *workers)
        }
        Command::Compare { eps, horizon, boundary_cutoff } => {
            commands::compare(&ctx, *eps, *horizon, *boundary_cutoff)
        }
    }
}
