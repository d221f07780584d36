//! `riskctl`: prices, backtests and sweeps lattice hedging strategies and
//! regenerates the reference tables as CSV.

mod commands;
mod config;
mod error;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "riskctl", version, about = "Risk-controlled hedging on recombining lattices")]
struct Cli {
    /// TOML configuration file; defaults describe the baseline GIC.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set algorithm.c=0.59`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Directory receiving the CSV outputs.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    /// Simulation seed (overrides `simulation.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the backward sweep and print the initial portfolio value.
    Price,
    /// Solve, then replay simulated paths and report mismatch statistics.
    Backtest,
    /// Solve and backtest at every retention level of `sweep.grid`.
    Sweep,
    /// Regenerate one of tables 1 to 5.
    Table {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=5))]
        id: u8,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("simulation.seed={seed}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Price => commands::price(&cfg, &cli.out),
        Command::Backtest => commands::run_backtest(&cfg, &cli.out),
        Command::Sweep => commands::sweep(&cfg, &cli.out),
        Command::Table { id } => tables::run(&cfg, id, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
