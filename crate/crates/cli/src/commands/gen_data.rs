use std::fs;
use std::path::Path;

use qtae_core::data::{generate_pairs, save_pairs};
use qtae_core::error::Result;

use crate::dataset::DatasetConfig;
use crate::jsonio::read_json_file;
use crate::plan::{resolve_seed, CommandPlan};
use crate::ppm::write_ppm;

pub fn run(config_path: &Path, out: &Path, seed_flag: Option<u64>) -> Result<()> {
    let mut cfg: DatasetConfig = read_json_file(config_path)?;
    if cfg.count == 0 {
        return Err(qtae_core::error::Error::contract("'count' must be at least 1"));
    }
    let (seed, seed_override) = resolve_seed(cfg.seed, seed_flag)?;
    cfg.seed = seed;
    let (space, synth, kind) = cfg.build()?;
    let pairs = generate_pairs(&space, cfg.count, cfg.seed, synth)?;
    fs::create_dir_all(out)?;
    save_pairs(out, kind, &space, cfg.seed, &pairs)?;
    // a loose source frame so render has something to chew on
    write_ppm(&out.join("sample.ppm"), &pairs[0].source)?;
    CommandPlan::new("gen-data", &cfg, out, seed_override)?.write_manifest()?;
    println!("wrote {} {} pairs to {}", pairs.len(), kind, out.display());
    Ok(())
}
