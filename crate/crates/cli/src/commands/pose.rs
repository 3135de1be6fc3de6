use std::fs;
use std::path::Path;

use qtae_core::data::load_pairs;
use qtae_core::error::Result;
use qtae_core::pose::{estimate_offset, offset_abs_error, SearchRange};
use qtae_core::train::{load_checkpoint, tae_pose_estimate, TrainedModel};
use serde::Serialize;

use crate::jsonio::write_json;
use crate::plan::CommandPlan;

#[derive(Serialize)]
struct PairEstimate {
    predicted: Vec<i64>,
    truth: Vec<i64>,
    abs_bin_error: f64,
}

#[derive(Serialize)]
struct PoseReport {
    mean_abs_bin_error: f64,
    exact_fraction: f64,
    pairs: Vec<PairEstimate>,
}

pub fn run(checkpoint: &Path, pairs_dir: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let (model, _, _) = ckpt.instantiate()?;
    let (_, pairs) = load_pairs(pairs_dir)?;
    if pairs.is_empty() {
        return Err(qtae_core::error::Error::contract("pose needs a non-empty dataset"));
    }
    let spec = ckpt.meta.lattice.clone();
    let range = SearchRange::full(&spec)?;

    let mut estimates = Vec::with_capacity(pairs.len());
    let mut exact = 0usize;
    let mut error_sum = 0.0;
    for pair in &pairs {
        let predicted = match &model {
            TrainedModel::Qtae(m) => {
                let y1 = m.encode(&pair.source)?;
                let y2 = m.encode(&pair.target)?;
                estimate_offset(&y1, &y2, &range)?.best_offset
            }
            TrainedModel::Tae(m) => {
                tae_pose_estimate(m, &pair.source, &pair.target, &spec)?.1
            }
        };
        let err = offset_abs_error(&spec, &pair.offset, &predicted)?;
        if predicted == pair.offset {
            exact += 1;
        }
        error_sum += err;
        estimates.push(PairEstimate {
            predicted: predicted.components.clone(),
            truth: pair.offset.components.clone(),
            abs_bin_error: err,
        });
    }

    let report = PoseReport {
        mean_abs_bin_error: error_sum / pairs.len() as f64,
        exact_fraction: exact as f64 / pairs.len() as f64,
        pairs: estimates,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join("pose.json"), &report)?;
    CommandPlan::new("pose", &ckpt.meta.config, out, None)?.write_manifest()?;

    println!(
        "estimated {} offsets: {:.1}% exact, mean error {:.4} bins",
        pairs.len(),
        100.0 * report.exact_fraction,
        report.mean_abs_bin_error,
    );
    Ok(())
}
