use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use mllfc_core::harness::commands::{self, CommandOutput};
use mllfc_core::harness::ExperimentConfig;
use mllfc_core::par::{with_threads, Execution};
use mllfc_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "mllfc",
    version,
    about = "Broadcast channel with noisy MAC feedback: regions, simulation and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file with dotted sections (`bc.P = 10`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override any config key, e.g. `--set mllfc.beta=0.9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Run trials on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Rate regions with and without feedback, as CSV and SVG.
    Regions,
    /// Monte Carlo runs of the modulo-lattice protocol around the OL scheme.
    Simulate,
    /// Aliasing probability of the lattices against closed forms and bounds.
    Lattice,
    /// Paired check of the noisy-feedback protocol against its noiseless reference.
    VerifyReduction,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = cli.trials {
        overrides.push(format!("trials={t}"));
    }
    if let Some(o) = &cli.out {
        let quoted = toml::Value::String(o.display().to_string()).to_string();
        overrides.push(format!("out={quoted}"));
    }
    if let Some(n) = cli.threads {
        overrides.push(format!("threads={n}"));
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn report<T: Serialize>(out: CommandOutput<T>) -> bool {
    print!("{}", out.jsonl);
    for f in &out.files {
        eprintln!("wrote {}", f.display());
    }
    out.passed
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let cfg = load(cli)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let command = cli.command;
    with_threads(cfg.threads, move || match command {
        Command::Regions => commands::cmd_regions(&cfg, exec).map(report),
        Command::Simulate => commands::cmd_simulate(&cfg, exec).map(report),
        Command::Lattice => commands::cmd_lattice(&cfg, exec).map(report),
        Command::VerifyReduction => commands::cmd_verify_reduction(&cfg, exec).map(report),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e @ (Error::Usage(_) | Error::Precondition(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
