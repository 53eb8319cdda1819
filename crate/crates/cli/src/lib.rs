//! Batch front end for `gaussbox`: JSON Lines in, CSV out.
//!
//! [`run`] parses arguments, reads and validates every input, computes all
//! outputs in memory, and only then writes files. Exit codes are 0 on
//! success, 1 on invalid input or I/O failure, 2 on usage errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
pub mod records;

pub use records::{parse_detections, parse_ground_truths, DetectionRecord, GroundTruthRecord, RecordError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Record { path: PathBuf, source: RecordError },

    #[error(transparent)]
    Core(#[from] gaussbox::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Parser)]
#[command(name = "gaussbox", version, about = "Gaussian bounding-box metrics, matching and uncertainty")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct GlobalOpts {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Divisions per confidence interval for localization uncertainty.
    #[arg(long, global = true, default_value_t = gaussbox::DEFAULT_K)]
    k: usize,

    #[arg(long, global = true, default_value_t = 2.0)]
    lambda_iou: f64,

    #[arg(long, global = true, default_value_t = 5.0)]
    lambda_l1: f64,

    #[arg(long, global = true, default_value_t = 1.0)]
    lambda_gw: f64,

    /// Worker threads; outputs do not depend on this value.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub(crate) enum OptimizerArg {
    Rprop,
    Gd,
}

#[derive(Debug, Subcommand)]
pub(crate) enum Command {
    /// Overlap and transport metrics for detections paired with ground truths
    /// by image and order within the image.
    Metric {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-image one-to-one matching under the risk-weighted quality cost.
    Match {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only match detections and ground truths of the same class.
        #[arg(long)]
        per_class: bool,
    },
    /// Localization uncertainty of every detection.
    Uncertainty {
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fits one box and its variances to a ground truth and writes the trace.
    FitDemo {
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth box as `cx,cy,w,h`.
        #[arg(long, value_parser = parse_box_arg, default_value = "0.5,0.5,0.4,0.2")]
        gt_box: [f64; 4],
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Rprop)]
        optimizer: OptimizerArg,
    },
    /// Uncertainty calibration on seeded synthetic scenes; writes pairs.csv,
    /// heatmap.csv and stats.csv.
    Calibrate {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        #[arg(long, default_value_t = 10)]
        dets_per_scene: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Heatmap bins per axis.
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Searches for two predictions that GIoU and CIoU cannot tell apart but
    /// GW can.
    Counterexample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0.01)]
        min_gap: f64,
        #[arg(long, default_value_t = 10_000)]
        max_trials: usize,
        /// Skip the nested-square candidate and search randomly only.
        #[arg(long)]
        no_analytic_seed: bool,
    },
    /// Per-class average precision at one IoU threshold.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
    },
}

fn parse_box_arg(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected cx,cy,w,h, got {} values", parts.len()));
    }
    let mut out = [0.0; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.global.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build()
            .map_err(|e| CliError::Invalid(e.to_string()))
            .and_then(|pool| pool.install(|| commands::execute(&cli.global, &cli.command))),
        None => commands::execute(&cli.global, &cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
