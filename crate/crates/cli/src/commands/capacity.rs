use std::fs;
use std::path::Path;

use qtae_core::error::Result;
use qtae_core::lattice::LatticeSpec;
use qtae_core::train::report_capacity;
use serde::{Deserialize, Serialize};

use crate::jsonio::{read_json_file, write_json};
use crate::plan::CommandPlan;

fn default_image() -> [usize; 3] {
    [1, 32, 32]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityConfig {
    lattice: LatticeSpec,
    /// Channels-height-width of the images the backbone would consume;
    /// only the parameter count depends on it.
    #[serde(default = "default_image")]
    image: [usize; 3],
}

pub fn run(spec_path: &Path, out: Option<&Path>) -> Result<()> {
    let cfg: CapacityConfig = read_json_file(spec_path)?;
    let report = report_capacity(&cfg.lattice, cfg.image)?;

    println!(
        "product {} cells vs additive {} cells at {} channels per site; {:?} backbone holds {} parameters",
        report.product_cells,
        report.additive_cells,
        cfg.lattice.channels,
        report.mode,
        report.parameter_count,
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("capacity.json"), &report)?;
        CommandPlan::new("capacity", &cfg, dir, None)?.write_manifest()?;
    }
    Ok(())
}
