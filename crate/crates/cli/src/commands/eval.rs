use std::fs;
use std::path::Path;

use qtae_core::data::load_pairs;
use qtae_core::error::Result;
use qtae_core::train::{evaluate, load_checkpoint};

use crate::jsonio::write_json;
use crate::plan::CommandPlan;

pub fn run(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let (model, _, _) = ckpt.instantiate()?;
    let (_, pairs) = load_pairs(data)?;
    let report = evaluate(&model, &pairs)?;

    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &report)?;
    let csv = format!(
        "series,psnr,ssim,samples\nmodel,{:.6},{:.6},{}\nmean-baseline,{:.6},{:.6},{}\n",
        report.model.psnr,
        report.model.ssim,
        report.model.samples,
        report.mean_baseline.psnr,
        report.mean_baseline.ssim,
        report.mean_baseline.samples,
    );
    fs::write(out.join("report.csv"), csv)?;
    CommandPlan::new("eval", &ckpt.meta.config, out, None)?.write_manifest()?;

    println!(
        "model {:.2} dB psnr / {:.4} ssim vs mean-image baseline {:.2} dB / {:.4} on {} pairs",
        report.model.psnr,
        report.model.ssim,
        report.mean_baseline.psnr,
        report.mean_baseline.ssim,
        report.model.samples,
    );
    Ok(())
}
