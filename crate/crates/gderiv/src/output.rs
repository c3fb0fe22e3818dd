//! Artifact bundle on disk: data files, `plot.gp`, `manifest.json` and
//! `walltime.json`. Only the last one depends on the clock.

use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::error::{Context, Result};
use crate::experiments::Bundle;

pub fn manifest(config: &ExperimentConfig, bundle: &Bundle) -> Value {
    let mut files = Map::new();
    for (name, bytes) in &bundle.files {
        files.insert(name.clone(), Value::String(hex(&Sha256::digest(bytes))));
    }
    let coverage: Map<String, Value> =
        bundle.coverage.iter().map(|(k, ops)| (k.clone(), json!(ops))).collect();
    json!({
        "experiment": config.kind().name(),
        "versions": {
            "gderiv": env!("CARGO_PKG_VERSION"),
            "gderiv-core": gderiv_core::VERSION,
        },
        "seed": config.seed,
        "config_hash": config.hash(),
        "config": config.canonical(),
        "files": files,
        "coverage": coverage,
        "plot": bundle.plot.as_ref().map(|_| "plot.gp"),
    })
}

/// Writes the bundle into `dir`, creating it when needed.
pub fn write_bundle(dir: &Path, config: &ExperimentConfig, bundle: &Bundle, wall_seconds: f64) -> Result<()> {
    std::fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))?;
    let put = |name: &str, bytes: &[u8]| std::fs::write(dir.join(name), bytes).context(|| format!("writing {name}"));
    for (name, bytes) in &bundle.files {
        put(name, bytes)?;
    }
    if let Some(plot) = &bundle.plot {
        put("plot.gp", plot.as_bytes())?;
    }
    let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n";
    put("manifest.json", pretty(&manifest(config, bundle)).as_bytes())?;
    let wall = json!({ "wall_seconds": wall_seconds, "sections": bundle.timings });
    put("walltime.json", pretty(&wall).as_bytes())
}
