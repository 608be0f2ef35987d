//! Output files: provenance headers and `.partial`-then-rename writes.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::config::{to_json, ExperimentConfig};

/// Version stamp embedded in every output.
pub const VERSION: &str = concat!("polymerlab v", env!("CARGO_PKG_VERSION"));

/// `path` with `.partial` appended to the file name.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `bytes` to `path.partial`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let tmp = partial_path(path);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

/// Leaves `bytes` at `path.partial` only (used when a run fails midway).
pub fn write_partial(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = partial_path(path);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    command: &'static str,
    config: &'a ExperimentConfig,
    seeds: Seeds,
    results: &'a T,
}

#[derive(Serialize)]
struct Seeds {
    base_seed: u64,
    /// streams are `(base_seed, replica, lane)`
    scheme: &'static str,
}

/// Pretty JSON report wrapping `results` with version, config and seeds.
pub fn json_report<T: Serialize>(cfg: &ExperimentConfig, results: &T) -> Result<Vec<u8>> {
    let env = Envelope {
        version: VERSION,
        command: cfg.command.name(),
        config: cfg,
        seeds: Seeds { base_seed: cfg.seed, scheme: "chacha8(seed, replica * 4 + lane)" },
        results,
    };
    let mut bytes = serde_json::to_vec_pretty(&env)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `#` comment lines carrying version, config and seed for CSV outputs.
pub fn csv_header(cfg: &ExperimentConfig) -> Result<String> {
    Ok(format!("# version: {VERSION}\n# config: {}\n# base_seed: {}\n", to_json(cfg)?, cfg.seed))
}
