use std::fs;
use std::path::Path;

use qtae_core::data::load_pairs;
use qtae_core::error::{Error, Result};
use qtae_core::train::{curve_to_csv, save_checkpoint, train, TrainConfig};

use crate::jsonio::{read_json_file, write_json};
use crate::plan::{resolve_seed, CommandPlan};

pub fn run(config_path: &Path, data: &Path, out: &Path, seed_flag: Option<u64>) -> Result<()> {
    let mut cfg: TrainConfig = read_json_file(config_path)?;
    let (seed, seed_override) = resolve_seed(cfg.seed, seed_flag)?;
    cfg.seed = seed;
    let (_, pairs) = load_pairs(data)?;
    let outcome = train(&cfg, &pairs)?;
    fs::create_dir_all(out)?;

    save_checkpoint(&outcome.checkpoint, &out.join("checkpoint.bin"))?;
    let records: Vec<_> =
        outcome.sweep.iter().flat_map(|s| s.curve.iter().cloned()).collect();
    fs::write(out.join("curve.csv"), curve_to_csv(&records))?;
    write_json(&out.join("sweep.json"), &outcome.sweep)?;
    CommandPlan::new("train", &cfg, out, seed_override)?.write_manifest()?;

    let best = outcome
        .sweep
        .iter()
        .find(|s| s.lr == outcome.best_lr)
        .ok_or_else(|| Error::contract("sweep lost its winning entry"))?;
    println!(
        "trained {} epochs x {} learning rates; best lr {:e} at {:.2} dB validation",
        cfg.epochs,
        cfg.learning_rates.len(),
        outcome.best_lr,
        best.final_val_psnr.unwrap_or(f64::NAN),
    );
    Ok(())
}
