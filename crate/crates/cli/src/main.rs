//! `uot`: runs transport, quantization and cell-problem experiments from
//! JSON configs.
//!
//! Exit codes: 0 on success, 2 for invalid or infeasible input (with an
//! error JSON on stderr), 3 when the solver did not converge (outputs are
//! still written).

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use uot_core::UotError;

use config::{Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "uot", version, about = "Semi-discrete unbalanced transport and quantization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the dual problem for weights and export cells and marginal.
    Transport(CommonArgs),
    /// Optimize site positions and export the resulting tessellation.
    Quantize(CommonArgs),
    /// Tabulate the hexagonal cell problem B and its derivative.
    CellProblem(CommonArgs),
    /// Compute the asymptotically optimal point density.
    AsymptoticDensity(CommonArgs),
    /// Repeat transport, quantize or asymptotic-density over parameter values.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn error_kind(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<UotError>() {
        Some(UotError::InvalidArgument(_)) => "invalid-argument",
        Some(UotError::Infeasible(_)) => "infeasible",
        Some(UotError::OutOfRange(_)) => "out-of-range",
        Some(UotError::ShapeMismatch { .. }) => "shape-mismatch",
        Some(UotError::Io { .. }) => "io",
        Some(UotError::Parse { .. }) => "parse",
        None => "invalid-config",
    }
}

fn execute(command: Command, args: CommonArgs) -> anyhow::Result<run::Outcome> {
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let config = ExperimentConfig::load(&args.config)?.resolve(command, &base, args.seed, args.out)?;
    run::run(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Transport(a) => (Command::Transport, a),
        Sub::Quantize(a) => (Command::Quantize, a),
        Sub::CellProblem(a) => (Command::CellProblem, a),
        Sub::AsymptoticDensity(a) => (Command::AsymptoticDensity, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    match execute(command, args) {
        Ok(outcome) => {
            let status = if outcome.converged { "ok" } else { "not-converged" };
            println!("{}", json!({"status": status, "summary": outcome.summary, "files": outcome.files}));
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "{}",
                    json!({"error": "not-converged", "message": "solver did not converge; partial outputs written", "exit_code": EXIT_NOT_CONVERGED})
                );
                ExitCode::from(EXIT_NOT_CONVERGED)
            }
        }
        Err(err) => {
            let message = format!("{err:#}");
            eprintln!("{}", json!({"error": error_kind(&err), "message": message, "exit_code": EXIT_INPUT}));
            ExitCode::from(EXIT_INPUT)
        }
    }
}
