//! `slc`: reproducible experiments for the special Lagrangian curvature
//! toolkit.
//!
//! Exit codes: 0 success, 1 a check was violated, 2 bad configuration or
//! unsupported phase, 3 the solver did not converge, 4 a referenced solution
//! file is missing.

mod commands;
mod solution;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slc_core::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "slc", version, about = "Special Lagrangian curvature equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// RNG seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write SVG heat maps where a command supports them.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Randomized algebraic and on-phase identity suites.
    VerifyIdentities,
    /// Sampling check of the Jacobi inequality.
    VerifyJacobi,
    /// Dirichlet problem by Newton continuation.
    Solve,
    /// Interior-estimate probes on the perturbed-cap family.
    Probe,
    /// Optimal-transport consistency and MTW scan in dimension two.
    Ot,
}

/// Everything a command needs: the parsed config with flag overrides applied.
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub svg: bool,
}

fn context(cli: &Cli) -> Result<Context, commands::CliError> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.u64_or("seed", 0)?,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.path("out"))
        .unwrap_or_else(|| PathBuf::from("slc-out"));
    let svg = cli.svg || config.bool_or("svg", false)?;
    std::fs::create_dir_all(&out).map_err(|e| slc_core::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    Ok(Context { config, seed, out, svg })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = context(&cli).and_then(|ctx| match cli.command {
        Command::VerifyIdentities => commands::verify_identities(&ctx),
        Command::VerifyJacobi => commands::verify_jacobi(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Probe => commands::probe(&ctx),
        Command::Ot => commands::ot(&ctx),
    });
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
