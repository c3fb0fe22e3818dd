use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gderiv::config::{Format, Kind};
use gderiv::error::CliError;
use gderiv::{execute, resolve, Overrides};

/// Stochastic-derivative experiments.
#[derive(Debug, Parser)]
#[command(name = "gderiv", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Kind,
    /// TOML or JSON config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for path generation.
    #[arg(long)]
    threads: Option<usize>,
    /// Path export format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gderiv {}: {e}", cli.experiment.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        set_threads(n)?;
    }
    let overrides = Overrides { seed: cli.seed, format: cli.format, out: cli.out.clone() };
    let config = resolve(cli.experiment, cli.config.as_deref(), &overrides)?;
    let (bundle, dir) = execute(&config)?;
    for line in &bundle.summary {
        println!("{line}");
    }
    let n = bundle.files.len();
    println!("wrote {n} data file{} to {}", if n == 1 { "" } else { "s" }, dir.display());
    if bundle.failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        let e = CliError::Acceptance(format!("failed: {}", bundle.failed.join(", ")));
        eprintln!("gderiv {}: {e}", cli.experiment.name());
        Ok(ExitCode::from(e.exit_code() as u8))
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("--threads", e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<(), CliError> {
    Ok(())
}
