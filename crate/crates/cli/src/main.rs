use anyhow::Result;
use clap::{Parser, ValueEnum};
use polymerlab::commands::execute;
use polymerlab::config::{Command, ExperimentConfig};
use polymerlab::{exit_code, EXIT_CHECK, EXIT_OK};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// F_GUE in both determinant forms
    Fgue,
    /// Laplace transform of Z_N: determinant against Monte Carlo
    Laplace,
    /// distance of h_N to F_GUE as N grows
    Tw,
    /// sensitivity of h_N to moment-matched weight perturbations
    Perturb,
    /// steep-descent checks of the contours
    Diag,
    /// exp-gamma moments against Monte Carlo
    Moments,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Fgue => Command::Fgue,
            Cmd::Laplace => Command::Laplace,
            Cmd::Tw => Command::Tw,
            Cmd::Perturb => Command::Perturb,
            Cmd::Diag => Command::Diag,
            Cmd::Moments => Command::Moments,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "polymerlab", version, about = "Log-gamma polymer and Fredholm determinant experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// `key = value` experiment file
    #[arg(long)]
    config: Option<PathBuf>,
    /// worker threads (0 = all cores); never changes results
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// run below the supported size range
    #[arg(long)]
    force: bool,
}

fn run(cli: Cli) -> Result<bool> {
    let command = Command::from(cli.command);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(command, path)?,
        None => ExperimentConfig::defaults(command),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    cfg.force |= cli.force;
    let outcome = execute(&cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for f in &outcome.check.failures {
        eprintln!("check failed: {f}");
    }
    println!("{}: {}", command.name(), if outcome.check.passed { "PASS" } else { "FAIL" });
    Ok(outcome.check.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(EXIT_OK as u8),
        Ok(false) => ExitCode::from(EXIT_CHECK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
