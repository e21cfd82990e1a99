//! orbit-tracer: locate and track periodic orbits of forced nonlinear
//! systems through adaptive-control experiments.
//!
//! One command per process. Exit codes: 0 success, 1 configuration error,
//! 2 numerical failure, 3 non-convergence. Runs are deterministic: the same
//! configuration produces byte-identical CSV and SVG outputs (summary.json
//! differs only in wall time).

mod commands;
mod config;
mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Command, RunSummary};

#[derive(Parser)]
#[command(name = "orbit-tracer", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the status line.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the closed loop against a fixed reference.
    Simulate(CommonArgs),
    /// Trace a periodic-orbit branch across a frequency window.
    Continue(CommonArgs),
    /// Open-loop amplitude sweep over forcing frequency.
    Sweep(CommonArgs),
    /// Excitation-level (PE) report along the steady response.
    PeCheck(CommonArgs),
}

impl Cmd {
    fn split(&self) -> (Command, &CommonArgs) {
        match self {
            Cmd::Simulate(a) => (Command::Simulate, a),
            Cmd::Continue(a) => (Command::Continue, a),
            Cmd::Sweep(a) => (Command::Sweep, a),
            Cmd::PeCheck(a) => (Command::PeCheck, a),
        }
    }
}

fn run(command: Command, args: &CommonArgs) -> Result<(RunSummary, PathBuf), CliError> {
    let cfg = config::parse_config(&args.config)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let summary = commands::execute(command, &cfg, &out_dir)?;
    Ok((summary, out_dir))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let (command, args) = cli.cmd.split();
    match run(command, args) {
        Ok((summary, out_dir)) => {
            if !args.quiet {
                println!(
                    "orbit-tracer {}: {} ({:.2} s, outputs in {})",
                    command.name(),
                    summary.status,
                    summary.wall_time_s,
                    out_dir.display()
                );
            }
        }
        Err(e) => {
            eprintln!("orbit-tracer {}: {e}", command.name());
            std::process::exit(e.exit_code());
        }
    }
}
