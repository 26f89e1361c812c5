//! `evpinn`: train, evaluate and diagnose extended-input PINN solvers on the
//! moving-interface benchmarks.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numerical failures.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "evpinn", version, about = "Extended-input PINN solver for moving-interface problems")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a solver and evaluate it on the test grid.
    Train,
    /// Learn the level set of the interface by adaptive flow-map fitting.
    Levelset,
    /// Compare the kernel spectra of the extended and plain networks.
    Ntk,
    /// Evaluate a saved solution checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Levelset => "levelset",
            Command::Ntk => "ntk",
            Command::Eval { .. } => "eval",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    command: &'a str,
    seed: u64,
    threads: usize,
    config_sha256: String,
    outputs: &'a [String],
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config = load_config(cli)?;
    // the output location is not part of the hashed configuration
    let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let effective = config.to_toml();
    let mut ctx = Context::new(&config, out.clone(), cli.quiet)?;
    ctx.write("config.toml", &effective)?;
    match &cli.command {
        Command::Train => commands::train(&mut ctx)?,
        Command::Levelset => commands::levelset(&mut ctx)?,
        Command::Ntk => commands::ntk(&mut ctx)?,
        Command::Eval { checkpoint } => commands::eval(&mut ctx, checkpoint)?,
    }
    let mut outputs = ctx.written.clone();
    outputs.push("manifest.toml".into());
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        config_sha256: sha256_hex(&effective),
        outputs: &outputs,
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    write_file(&out.join("manifest.toml"), &text)?;
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if !cli.quiet {
                eprintln!("outputs written to {}", out.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
