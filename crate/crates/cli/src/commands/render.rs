use std::fs;
use std::path::Path;

use qtae_core::error::{Error, Result};
use qtae_core::lattice::LatticeOffset;
use qtae_core::tensor::Tensor;
use qtae_core::train::{load_checkpoint, TrainedModel};
use serde::Serialize;

use crate::plan::CommandPlan;
use crate::ppm::{adapt_channels, read_ppm, write_ppm};

#[derive(Serialize)]
struct RenderConfig {
    checkpoint: String,
    input: String,
    factor: Option<String>,
    steps: Option<usize>,
}

/// Offsets for one sweep row. Periodic factors cycle forward from the
/// identity; aperiodic ones sweep the valid range centred on it.
fn row_offsets(extent: usize, periodic: bool, steps: Option<usize>) -> Vec<i64> {
    let d = extent as i64;
    match (periodic, steps) {
        (true, None) => (0..d).collect(),
        (true, Some(s)) => (0..s as i64).map(|k| k.rem_euclid(d)).collect(),
        (false, None) => (-(d - 1)..d).collect(),
        (false, Some(s)) => {
            let s = s as i64;
            (0..s).map(|k| (k - (s - 1) / 2).clamp(-(d - 1), d - 1)).collect()
        }
    }
}

pub fn run(
    checkpoint: &Path,
    input: &Path,
    factor: Option<&str>,
    steps: Option<usize>,
    out: &Path,
) -> Result<()> {
    if steps == Some(0) {
        return Err(Error::contract("'steps' must be at least 1"));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let (model, _, _) = ckpt.instantiate()?;
    let model = match model {
        TrainedModel::Qtae(m) => m,
        TrainedModel::Tae(_) => {
            return Err(Error::contract(
                "render sweeps lattice factors; this checkpoint holds the continuous baseline",
            ))
        }
    };
    let spec = model.lattice().clone();
    let [c, h, w] = model.image_shape();

    let image = adapt_channels(read_ppm(input)?, c)?;
    if image.shape()[1] != h || image.shape()[2] != w {
        return Err(Error::contract(format!(
            "input is {}x{}, model expects {h}x{w}",
            image.shape()[1],
            image.shape()[2]
        )));
    }

    let rows: Vec<usize> = match factor {
        None => (0..spec.factors.len()).collect(),
        Some(name) => {
            let fi = spec
                .factors
                .iter()
                .position(|f| f.name == name)
                .ok_or_else(|| Error::contract(format!("unknown factor '{name}'")))?;
            vec![fi]
        }
    };
    let row_plans: Vec<Vec<i64>> = rows
        .iter()
        .map(|&fi| row_offsets(spec.factors[fi].extent, spec.factors[fi].periodic, steps))
        .collect();
    let cols = row_plans.iter().map(Vec::len).max().unwrap();

    // one contact sheet, row-major; short rows stay black on the right
    let mut sheet = Tensor::<f32>::zeros(&[c, rows.len() * h, cols * w]);
    let sheet_w = cols * w;
    for (r, (&fi, offsets)) in rows.iter().zip(&row_plans).enumerate() {
        for (col, &u) in offsets.iter().enumerate() {
            let mut offset = LatticeOffset::zero(spec.factors.len());
            offset.components[fi] = u;
            let frame = model.predict_transformed(&image, &offset)?;
            for ch in 0..c {
                for y in 0..h {
                    let src = &frame.data()[ch * h * w + y * w..ch * h * w + y * w + w];
                    let base = ch * rows.len() * h * sheet_w + (r * h + y) * sheet_w + col * w;
                    sheet.data_mut()[base..base + w].copy_from_slice(src);
                }
            }
        }
    }

    fs::create_dir_all(out)?;
    write_ppm(&out.join("render.ppm"), &sheet)?;
    let cfg = RenderConfig {
        checkpoint: checkpoint.display().to_string(),
        input: input.display().to_string(),
        factor: factor.map(str::to_owned),
        steps,
    };
    CommandPlan::new("render", &cfg, out, None)?.write_manifest()?;
    println!(
        "rendered {} row(s) x {} frame(s) to {}",
        rows.len(),
        cols,
        out.join("render.ppm").display()
    );
    Ok(())
}
