//! Batch command-line front end.
//!
//! Each subcommand reads its inputs, writes its outputs plus a
//! `manifest.json` into the `--out` directory and returns how many items it
//! processed. Outputs depend only on the inputs and the seed.

mod commands;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::correction::{CorrectionError, CorrectionStage};
use crate::evaluation::EvalError;
use crate::geometry::GeometryError;
use crate::io::{write_json_report, IoError};
use crate::leakage::LeakageError;

pub use commands::{run_correct, run_evaluate, run_select_days, run_sensitivity, run_size, run_split};

/// Environment variable holding the log filter (`error`, `warn`, `info`, `debug`, `trace`).
pub const LOG_ENV: &str = "MONOMETRY_LOG";

#[derive(Debug, Parser)]
#[command(name = "monometry", version, about = "Monocular object size estimation and dataset tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate metric object sizes from a directory of label files.
    Size(SizeArgs),
    /// Fit width/height correction models from predicted and reference sizes.
    Correct(CorrectArgs),
    /// Score detections against ground truth (precision, recall, mAP, confusion).
    Evaluate(EvaluateArgs),
    /// Cluster image embeddings and split whole clusters into train/val/test.
    Split(SplitArgs),
    /// Per-pixel size sensitivity of a directory of boxes.
    Sensitivity(SensitivityArgs),
    /// Pick the cloudiest and sunniest days from daily weather records.
    SelectDays(SelectDaysArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SizeArgs {
    /// Directory of YOLO label files (`<image_id>.txt`).
    #[arg(long)]
    pub labels: PathBuf,
    /// Camera rig file.
    #[arg(long)]
    pub rig: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    BoxShape,
    Dimension,
}

impl From<StageArg> for CorrectionStage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::BoxShape => CorrectionStage::BoxShape,
            StageArg::Dimension => CorrectionStage::Dimension,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CorrectArgs {
    /// Predicted sizes (CSV with object_id, dim_x_cm, dim_y_cm).
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference sizes, same columns.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Polynomial degree (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    #[arg(long, value_enum, default_value_t = StageArg::Dimension)]
    pub stage: StageArg,
    /// Sizes from hand-annotated boxes; enables the 3x3 strategy grid
    /// (predicted = detector boxes, reference = measured dimensions).
    #[arg(long)]
    pub shape_ref: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory of detection files (`class cx cy w h conf`).
    #[arg(long)]
    pub det: PathBuf,
    /// Directory of ground-truth label files.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub conf_thresh: f64,
    /// IoU needed for a true positive in precision, recall and the confusion matrix.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Number of classes; defaults to one more than the largest class id seen.
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Rig whose image size is used to denormalize boxes (IoU does not depend on it).
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Embedding matrix CSV (image_id, 256 visual columns, optional timestamp).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Directory of label files keyed by image id; images without one have no objects.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 10)]
    pub min_samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub rig: PathBuf,
    /// Shift applied in each direction, in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SelectDaysArgs {
    /// CSV with columns date, INST, GLOT, SIGMA.
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: IoError },
    #[error("no input: {0}")]
    EmptyInput(String),
    #[error("nothing processed: {0}")]
    NothingProcessed(String),
    #[error("unpaired samples: missing reference for [{}], missing prediction for [{}]", .missing_reference.join(", "), .missing_prediction.join(", "))]
    UnpairedSamples { missing_reference: Vec<String>, missing_prediction: Vec<String> },
    #[error("image sets do not match: {0}")]
    DisjointImageSets(String),
    #[error("annotation files without an embedding row: {}", .0.join(", "))]
    InconsistentIds(Vec<String>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// An input item left out of the results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skip {
    pub item: String,
    /// Machine-readable cause, e.g. `malformed_file` or `behind_camera`.
    pub reason: String,
    pub detail: String,
}

/// Record of one run, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub rig: Option<String>,
    pub seed: Option<u64>,
    pub out: String,
    pub processed: usize,
    pub skipped: Vec<Skip>,
}

impl RunManifest {
    fn new(subcommand: &str, inputs: &[&Path], rig: Option<&Path>, seed: Option<u64>, out: &Path) -> Self {
        Self {
            subcommand: subcommand.into(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            rig: rig.map(|p| p.display().to_string()),
            seed,
            out: out.display().to_string(),
            processed: 0,
            skipped: Vec::new(),
        }
    }

    fn skip(&mut self, item: impl Into<String>, reason: &str, detail: impl ToString) {
        let item = item.into();
        let detail = detail.to_string();
        log::warn!("skipping {item}: {detail}");
        self.skipped.push(Skip { item, reason: reason.into(), detail });
    }

    fn write(&self, out: &Path) -> Result<()> {
        create_dir(out)?;
        write_file(&out.join("manifest.json"), &write_json_report(self))
    }
}

/// Stable identifier of a geometry failure.
pub fn geometry_reason(e: &GeometryError) -> &'static str {
    match e.root() {
        GeometryError::InvalidRig(_) => "invalid_rig",
        GeometryError::InvalidBox(_) => "invalid_box",
        GeometryError::DegenerateVectors { .. } => "degenerate_vectors",
        GeometryError::ParallelRay { .. } => "parallel_ray",
        GeometryError::BehindCamera { .. } => "behind_camera",
        GeometryError::OutOfView(_) => "out_of_view",
        GeometryError::NonFinite(_) => "non_finite",
        GeometryError::InBox { .. } => "geometry",
    }
}

fn read_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Write { path: path.into(), source })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Write { path: path.into(), source })
}

/// `(image_id, path)` of every `*.txt` file in `dir`, sorted by image id.
fn label_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|source| CliError::Read { path: dir.into(), source })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| CliError::Read { path: dir.into(), source })?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem() {
                files.push((stem.to_string_lossy().into_owned(), path));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// What a successful run did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub processed: usize,
    pub skipped: usize,
    /// One-line human summary for stdout.
    pub summary: String,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Size(a) => run_size(a),
        Command::Correct(a) => run_correct(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Split(a) => run_split(a),
        Command::Sensitivity(a) => run_sensitivity(a),
        Command::SelectDays(a) => run_select_days(a),
    }
}
