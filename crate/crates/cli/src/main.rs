//! `fracheat`: run operator, kernel, ensemble, oracle and sweep pipelines
//! from one TOML configuration.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fracheat", version, about = "Killed fractional heat equations with multiplicative noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`, defaults to `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "FRACHEAT_THREADS")]
    threads: Option<usize>,
    /// Overrides `[simulation] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Assemble and diagonalize the generator.
    OperatorInfo,
    /// Measure the two-sided heat kernel bounds.
    KernelVerify,
    /// Evaluate the Laplace-type kernel integrals.
    LemmaCheck,
    /// Run a Monte Carlo ensemble.
    Simulate,
    /// Solve the second-moment Volterra equations.
    Oracle,
    /// Sweep the noise level and bracket the decay/growth transition.
    Sweep,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        match cfg.simulation.as_mut() {
            Some(sim) => sim.seed = seed,
            None => return Err(CliError::Config("--seed needs a [simulation] section".into())),
        }
    }
    cfg.check()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let artifacts = match cli.command {
        Command::OperatorInfo => commands::operator_info(&cfg)?,
        Command::KernelVerify => commands::kernel_verify(&cfg)?,
        Command::LemmaCheck => commands::lemma_check(&cfg)?,
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Oracle => commands::oracle(&cfg)?,
        Command::Sweep => commands::sweep(&cfg)?,
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir())
        .unwrap_or_else(|| PathBuf::from("out"));
    report::emit(&dir, &cfg, &artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
