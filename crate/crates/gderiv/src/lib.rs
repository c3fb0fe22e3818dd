//! Config-driven experiment runner for the `gderiv-core` numerics.
//!
//! Each subcommand loads a TOML (or JSON) config, runs one experiment and
//! writes an artifact bundle: data CSVs, a gnuplot script, a manifest with
//! the canonical config and its hash, and a separate wall-time file.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod suite;

use std::path::PathBuf;
use std::time::Instant;

use config::{ExperimentConfig, Format, Kind};
use error::Result;
use experiments::Bundle;

/// Command-line overrides on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_OUT: &str = "out";

/// Loads the config (defaults when `path` is `None`) and applies overrides.
pub fn resolve(kind: Kind, path: Option<&std::path::Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p, Some(kind))?,
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(f) = overrides.format {
        config.format = f;
    }
    if let Some(o) = &overrides.out {
        config.out = Some(o.clone());
    }
    Ok(config)
}

/// Runs the experiment and writes its bundle; returns the bundle and the
/// output directory.
pub fn execute(config: &ExperimentConfig) -> Result<(Bundle, PathBuf)> {
    let start = Instant::now();
    let bundle = experiments::run(config)?;
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    output::write_bundle(&dir, config, &bundle, start.elapsed().as_secs_f64())?;
    Ok((bundle, dir))
}
