use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod dataset;
mod jsonio;
mod plan;
mod ppm;

/// Quantised transforming auto-encoder toolkit.
///
/// Every artifact-producing run is deterministic: the same inputs and seed
/// produce byte-identical outputs, and a `run.json` manifest in the output
/// directory records the fully resolved configuration. The environment
/// variable QTAE_SEED, when set, overrides both `--seed` flags and
/// config-file seeds.
#[derive(Parser)]
#[command(name = "qtae", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired-transformation dataset into a directory.
    GenData {
        /// Dataset description (JSON, unknown keys rejected).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the image blob, manifest, and preview.
        #[arg(long)]
        out: PathBuf,
        /// Replaces the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a generated dataset.
    Train {
        /// Training configuration (JSON, unknown keys rejected).
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint against a dataset, with a mean-image baseline.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode factor sweeps of an input image into a PPM contact sheet.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image (P5 or P6 PPM, matching the model's extents).
        #[arg(long)]
        input: PathBuf,
        /// Sweep only this factor; default is one row per factor.
        #[arg(long)]
        factor: Option<String>,
        /// Frames per row. Defaults to one full cycle (periodic) or the
        /// whole valid offset range (aperiodic).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate per-pair transformation offsets from embeddings.
    Pose {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory holding the evaluation pairs.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train QTAE and TAE on a scene space with an attribute combination
    /// held out, and tabulate both models on both splits.
    Holdout {
        /// Hold-out experiment description (JSON, unknown keys rejected).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference verification of every gradient path.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        /// Random base points per check.
        #[arg(long, default_value_t = 5)]
        instances: usize,
        /// Optional directory for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embedding cell counts and backbone parameter totals for a lattice.
    Capacity {
        /// Lattice description (JSON, unknown keys rejected).
        #[arg(long)]
        spec: PathBuf,
        /// Optional directory for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, seed } => commands::gen_data::run(&config, &out, seed),
        Command::Train { config, data, out, seed } => {
            commands::train::run(&config, &data, &out, seed)
        }
        Command::Eval { checkpoint, data, out } => commands::eval::run(&checkpoint, &data, &out),
        Command::Render { checkpoint, input, factor, steps, out } => {
            commands::render::run(&checkpoint, &input, factor.as_deref(), steps, &out)
        }
        Command::Pose { checkpoint, pairs, out } => commands::pose::run(&checkpoint, &pairs, &out),
        Command::Holdout { config, out, seed } => commands::holdout::run(&config, &out, seed),
        Command::Gradcheck { seed, instances, out } => {
            commands::gradcheck::run(seed, instances, out.as_deref())
        }
        Command::Capacity { spec, out } => commands::capacity::run(&spec, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
