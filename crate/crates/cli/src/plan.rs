//! Seed resolution and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use qtae_core::error::{Error, Result};
use serde::Serialize;

use crate::jsonio;

pub const RUN_MANIFEST: &str = "run.json";

/// A resolved invocation: what ran, with which effective configuration,
/// into which directory. Written to `run.json` so any artifact directory
/// documents how to reproduce itself.
#[derive(Debug, Serialize)]
pub struct CommandPlan {
    pub subcommand: &'static str,
    /// Fully resolved configuration, seed overrides already applied.
    pub config: serde_json::Value,
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Set when QTAE_SEED or --seed replaced the configured seed.
    pub seed_override: Option<u64>,
}

impl CommandPlan {
    pub fn new(
        subcommand: &'static str,
        config: &impl Serialize,
        out_dir: &Path,
        seed_override: Option<u64>,
    ) -> Result<Self> {
        Ok(CommandPlan {
            subcommand,
            config: serde_json::to_value(config)?,
            out_dir: out_dir.to_path_buf(),
            seed_override,
        })
    }

    pub fn write_manifest(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        jsonio::write_json(&self.out_dir.join(RUN_MANIFEST), self)
    }
}

/// QTAE_SEED from the environment; unset is fine, unparsable is not.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("QTAE_SEED") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::contract(format!("QTAE_SEED: {e}"))),
        Ok(text) => text
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::contract(format!("QTAE_SEED: '{text}' is not a u64"))),
    }
}

/// Effective seed and whether it overrides the configured one. Precedence:
/// QTAE_SEED, then --seed, then the config file.
pub fn resolve_seed(config_seed: u64, flag: Option<u64>) -> Result<(u64, Option<u64>)> {
    let forced = env_seed()?.or(flag);
    Ok(match forced {
        Some(s) => (s, Some(s)),
        None => (config_seed, None),
    })
}
