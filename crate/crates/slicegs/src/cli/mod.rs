//! `slicegs` command line: argument definitions and dispatch.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use slicegs_core::Axis;

use crate::error::{Error, Result};

pub use commands::{
    cmd_eval, cmd_export, cmd_gradcheck, cmd_phantom, cmd_render, cmd_train, load_dataset, Dataset, TrainSummary,
};

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    s.parse().map_err(|e: slicegs_core::Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "slicegs", version, about = "Slice-based semantic Gaussian reconstruction of volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every command. Unset flags fall back to the config
/// file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Slice normal: x, y or z.
    #[arg(long, global = true, value_parser = parse_axis)]
    pub axis: Option<Axis>,
    /// Fraction of slices used for training, in (0, 1).
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fixed-order gradient reduction; `--deterministic false` turns it off.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

/// Where slices come from: a volume directory or PNG stacks.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory holding `volume.raw`/`.desc` and optionally
    /// `labels.raw`/`.desc` and `palette.txt`.
    #[arg(long, conflicts_with = "slices")]
    pub data: Option<PathBuf>,
    /// Directory of 8-bit PNG intensity slices.
    #[arg(long)]
    pub slices: Option<PathBuf>,
    /// Directory of RGB semantic PNG slices matching `--slices`.
    #[arg(long, requires = "slices")]
    pub semantic_slices: Option<PathBuf>,
    /// Palette file (overrides `palette.txt` in `--data`).
    #[arg(long)]
    pub palette: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom volume, label volume and palette.
    Phantom {
        #[arg(long, default_value_t = 64)]
        dims: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train a scene on the training split and write a checkpoint, CSV logs
    /// and held-out renders.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Extra configuration entries, `KEY=VALUE`; applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Skip writing held-out renders.
        #[arg(long)]
        no_renders: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Render slices from a checkpoint at arbitrary depths.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Slice depth in [0, 1]; repeatable.
        #[arg(long = "t", value_name = "T", required_unless_present = "indices")]
        depths: Vec<f64>,
        /// Slice index range `A..B` (end exclusive) over `--count` slices.
        #[arg(long, conflicts_with = "depths")]
        indices: Option<String>,
        /// Slice count for `--indices` (default: volume size along the axis).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Also write raw little-endian f32 images.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a dataset split and write `eval.csv`.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[command(flatten)]
        common: Common,
    },
    /// Compare analytic and finite-difference gradients on the standard
    /// fixture.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Perturb the analytic gradient (harness self-test).
        #[arg(long, hide = true)]
        corrupt: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write a dataset, or every slice rendered from a checkpoint, as PNG
    /// stacks plus a raw volume.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Phantom { common, .. }
            | Command::Train { common, .. }
            | Command::Render { common, .. }
            | Command::Eval { common, .. }
            | Command::Gradcheck { common, .. }
            | Command::Export { common, .. } => common,
        }
    }
}

/// Configure the global thread pool. Only the first call has an effect.
pub fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Argument("--threads must be at least 1".into()));
        }
        // A pool that already exists (second call in one process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads(cli.command.common().threads)?;
    match cli.command {
        Command::Phantom { dims, common } => cmd_phantom(common.seed.unwrap_or(0), dims, &common.out),
        Command::Train { data, config, iterations, set, no_renders, common } => {
            let summary = cmd_train(&data, config.as_deref(), iterations, &set, !no_renders, &common)?;
            println!("{summary}");
            Ok(())
        }
        Command::Render { checkpoint, depths, indices, count, width, height, raw, common } => {
            let written = cmd_render(&checkpoint, &depths, indices.as_deref(), count, width.zip(height), raw, &common)?;
            println!("wrote {written} slices to {}", common.out.display());
            Ok(())
        }
        Command::Eval { checkpoint, data, split, common } => {
            let report = cmd_eval(&checkpoint, &data, split, &common)?;
            println!(
                "{} slices: psnr {:.3} dB ({} infinite), ssim {:.4}",
                report.slices.len(),
                report.psnr.mean,
                report.psnr.excluded,
                report.ssim.mean
            );
            Ok(())
        }
        Command::Gradcheck { h, tolerance, corrupt, common } => {
            let report = cmd_gradcheck(common.seed.unwrap_or(0), h, corrupt)?;
            for g in &report.groups {
                println!("{:<10} max_rel {:.3e}  max_abs {:.3e}  ({} values)", g.group.name(), g.max_relative, g.max_absolute, g.checked);
            }
            let worst = report.max_relative();
            if worst <= tolerance {
                println!("pass: max relative error {worst:.3e} <= {tolerance:e}");
                Ok(())
            } else {
                Err(Error::GradCheck(worst))
            }
        }
        Command::Export { data, checkpoint, common } => cmd_export(&data, checkpoint.as_deref(), &common),
    }
}
