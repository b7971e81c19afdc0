//! `acpd run <config.json>` and `acpd compare <config.json>`.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use runner::{CliError, Context};

#[derive(Parser, Debug)]
#[command(name = "acpd", version, about = "Run auto-conditioned primal-dual solvers from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; beats the config's output_dir
    #[arg(long, global = true, env = "ACPD_OUT_DIR")]
    out: Option<PathBuf>,
    /// Problem seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Iteration cap, overriding stop.max_iters (inner cap for guess-check)
    #[arg(long, global = true)]
    max_iters: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve with one algorithm; writes trace.csv and certificate.json
    Run { config: PathBuf },
    /// Solve with every listed algorithm; writes compare.csv and compare.txt
    Compare { config: PathBuf },
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = match &cli.command {
        Command::Run { config } | Command::Compare { config } => config,
    };
    let cfg = RunConfig::load(path).map_err(CliError::Config)?;
    let ctx = Context {
        out_dir: cli
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("acpd-out")),
        config_dir: path.parent().map(PathBuf::from).unwrap_or_default(),
        seed: cli.seed,
        max_iters: cli.max_iters,
    };
    match cli.command {
        Command::Run { .. } => runner::run(&cfg, &ctx),
        Command::Compare { .. } => runner::compare(&cfg, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(e.exit_code())
        }
    }
}
