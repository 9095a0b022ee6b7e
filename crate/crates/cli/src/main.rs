//! `gbridge`: closed-form Gaussian bridges and Sinkhorn experiments from JSON
//! configs, written as CSV tables and a summary JSON.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 numerical failure.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::{ConfigError, Mode};

#[derive(Parser)]
#[command(
    name = "gbridge",
    version,
    about = "Gaussian Schrödinger bridge and Sinkhorn experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the report on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form bridge, duals, commutation checks and rates.
    Bridge(Args),
    /// Sinkhorn trajectory with certified error bounds.
    Sinkhorn(Args),
    /// Contraction rates along `θ(t) = (α, β, tI)`.
    Rates(Args),
    /// Small- and large-noise asymptotics along `θ(t)`.
    Regularize(Args),
    /// Grid IPF oracle (1-D only).
    Oracle(Args),
    /// Monte Carlo check of the bridge pushforward.
    Montecarlo(Args),
    /// Mode taken from the config's `mode` field.
    Run(Args),
}

enum Failure {
    Io(anyhow::Error),
    Config(ConfigError),
    Numerical(gbridge::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

fn write_outputs(dir: &Path, artifacts: &run::Artifacts) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for (name, bytes) in &artifacts.tables {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&artifacts.summary)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

fn execute(mode: Option<Mode>, args: &Args) -> Result<Vec<PathBuf>, Failure> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Failure::Config(ConfigError {
            path: "<file>".into(),
            message: format!("{}: {e}", args.config.display()),
        })
    })?;
    let cfg = config::parse(&text).map_err(Failure::Config)?;
    let mode = mode.or(cfg.mode).ok_or_else(|| {
        Failure::Config(ConfigError {
            path: "mode".into(),
            message: "required with the `run` subcommand".into(),
        })
    })?;
    let exp = cfg.validate(mode, args.seed).map_err(Failure::Config)?;
    let artifacts = run::run(&exp).map_err(Failure::Numerical)?;
    let dir = args
        .out
        .clone()
        .or(cfg.output)
        .unwrap_or_else(|| PathBuf::from("out"));
    write_outputs(&dir, &artifacts).map_err(Failure::Io)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Bridge(a) => (Some(Mode::Bridge), a),
        Command::Sinkhorn(a) => (Some(Mode::Sinkhorn), a),
        Command::Rates(a) => (Some(Mode::Rates), a),
        Command::Regularize(a) => (Some(Mode::Regularize), a),
        Command::Oracle(a) => (Some(Mode::Oracle), a),
        Command::Montecarlo(a) => (Some(Mode::Montecarlo), a),
        Command::Run(a) => (None, a),
    };
    match execute(mode, args) {
        Ok(files) => {
            if !args.quiet {
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Io(e) => eprintln!("error: {e:#}"),
                Failure::Config(e) => eprintln!("{e}"),
                Failure::Numerical(e) => eprintln!("numerical failure: {e}"),
            }
            ExitCode::from(f.code())
        }
    }
}
