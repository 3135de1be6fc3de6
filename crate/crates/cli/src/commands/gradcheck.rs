use std::fs;
use std::path::Path;

use qtae_core::error::{Error, Result};
use qtae_core::model::gradcheck_suite;
use serde::Serialize;

use crate::jsonio::write_json;
use crate::plan::{env_seed, CommandPlan};

/// Op checks must sit at FD noise level; whole stacks accumulate a little
/// more from eight layers of f64 central differences.
const OP_TOLERANCE: f64 = 1e-6;
const STACK_TOLERANCE: f64 = 1e-4;

#[derive(Serialize)]
struct CheckRow {
    name: &'static str,
    stack: bool,
    passed: bool,
    probes: usize,
    max_abs_diff: f64,
    max_rel_diff: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct GradcheckConfig {
    seed: u64,
    instances: usize,
    op_tolerance: f64,
    stack_tolerance: f64,
}

pub fn run(seed_flag: Option<u64>, instances: usize, out: Option<&Path>) -> Result<()> {
    let seed = env_seed()?.or(seed_flag).unwrap_or(1);
    let cases = gradcheck_suite(seed, instances, OP_TOLERANCE, STACK_TOLERANCE)?;

    let rows: Vec<CheckRow> = cases
        .iter()
        .map(|c| CheckRow {
            name: c.name,
            stack: c.stack,
            passed: c.report.passed,
            probes: c.report.probes,
            max_abs_diff: c.report.max_abs_diff,
            max_rel_diff: c.report.max_rel_diff,
            tolerance: c.report.tolerance,
        })
        .collect();
    for r in &rows {
        println!(
            "{} {} (max rel {:.3e}, tolerance {:.0e})",
            if r.passed { "pass" } else { "FAIL" },
            r.name,
            r.max_rel_diff,
            r.tolerance,
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("gradcheck.json"), &rows)?;
        let cfg = GradcheckConfig {
            seed,
            instances,
            op_tolerance: OP_TOLERANCE,
            stack_tolerance: STACK_TOLERANCE,
        };
        CommandPlan::new("gradcheck", &cfg, dir, None)?.write_manifest()?;
    }

    let failures: Vec<_> = rows.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failures.is_empty() {
        println!("all {} gradient checks passed", rows.len());
        Ok(())
    } else {
        Err(Error::numeric(format!("gradient checks failed: {}", failures.join(", "))))
    }
}
