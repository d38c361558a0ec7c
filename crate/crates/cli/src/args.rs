use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tremor_core::models::Variant;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "tremor", version, about = "Building damage detection on synthetic pre/post disaster scenes")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic region: scenes, detector output and a labelled dataset.
    Synth(SynthArgs),
    /// Deduplicate and label stored detections, crop patches and assign folds.
    Pipeline(PipelineArgs),
    /// Train a model on a dataset and write a checkpoint and its history.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run the cross-region experiment matrix.
    Experiment(ExperimentArgs),
    /// Render report files as SVG or re-emit them as validated CSV or JSON.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Cc,
    Po,
    Ttc,
    Tts,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Cc => Variant::Cc,
            VariantArg::Po => Variant::Po,
            VariantArg::Ttc => Variant::Ttc,
            VariantArg::Tts => Variant::Tts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Builtin region name or path to a region style file.
    #[arg(long, default_value = "haiti-like")]
    pub region: String,
    /// Fraction of the full-size class counts to generate.
    #[arg(long, default_value_t = 0.01)]
    pub scale: f64,
    /// TOML file with optional [detector] and [pipeline] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Region directories written by `synth`.
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    /// TOML file with an optional [pipeline] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value = "dataset")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest, or a directory holding `manifest.jsonl`.
    pub dataset: PathBuf,
    /// TOML file with optional [model] and [train] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Longitude folds; the westernmost fold is held out for validation.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value = "model")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train` (`model.tlw`).
    pub checkpoint: PathBuf,
    /// Dataset manifest, or a directory holding `manifest.jsonl`.
    pub dataset: PathBuf,
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Matrix file; the builtin default matrix when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Run this single seed instead of the matrix seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Leave the generation timestamp out of SVG output.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment reports (`report.csv`, `report.json`) and ROC tables (`roc.csv`).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Svg)]
    pub format: Format,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    /// Leave the generation timestamp out of SVG output.
    #[arg(long)]
    pub deterministic: bool,
}
