//! Run manifest, written for every invocation that reaches an output directory.

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    /// sha256 of the effective configuration serialized as JSON
    pub config_hash: String,
    pub seed: u64,
    pub rng: &'static str,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub status: &'static str,
    pub exit_code: i32,
    pub message: Option<String>,
}

pub const RNG_DERIVATION: &str = "ChaCha8 keyed by splitmix64(seed, tag, path, step)";

pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).unwrap_or_default();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn versions() -> BTreeMap<&'static str, &'static str> {
    let mut v = BTreeMap::new();
    v.insert("osgood-lab", osgood_lab::VERSION);
    v.insert("osgood-lab-cli", env!("CARGO_PKG_VERSION"));
    v
}

pub fn write(dir: &Path, m: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
