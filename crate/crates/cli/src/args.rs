use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmcse::data::CoocBoost;
use mmcse::model::{LgsfResidual, MmilMode};
use mmcse::OrtMode;

#[derive(Debug, Parser)]
#[command(name = "mmcse", version, about = "Audio-visual video parsing with class-aware decoupling and semantic enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train a model and write per-epoch checkpoints plus a step log.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Finite-difference check of every parameter gradient on a tiny random model.
    GradCheck(GradCheckArgs),
    /// Write the mean final-layer audio-visual co-occurrence map as JSON.
    ExportCooc(ExportArgs),
    /// Write decoupled per-segment features as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of videos [default: 64].
    #[arg(long)]
    pub videos: Option<usize>,
    /// Segments per video [default: 10].
    #[arg(long)]
    pub segments: Option<usize>,
    /// Number of event classes [default: 6].
    #[arg(long)]
    pub classes: Option<usize>,
    /// Raw feature widths as DA,DV [default: 32,32].
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<(usize, usize)>,
    /// Gaussian feature noise [default: 0.1].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Probability that a segment is cleared to background [default: 0].
    #[arg(long)]
    pub background_prob: Option<f64>,
    /// Forced co-occurrence I:J:P; repeatable.
    #[arg(long, value_parser = parse_cooc)]
    pub cooc: Vec<CoocBoost>,
    /// Generator seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[allow(clippy::enum_variant_names)]
pub enum AblationName {
    NoCafd,
    NoBg,
    NoSecm,
    NoLgsf,
    NoIntra,
    NoCross,
}

impl AblationName {
    pub fn flag(self) -> &'static str {
        match self {
            AblationName::NoCafd => "no-cafd",
            AblationName::NoBg => "no-bg",
            AblationName::NoSecm => "no-secm",
            AblationName::NoLgsf => "no-lgsf",
            AblationName::NoIntra => "no-intra",
            AblationName::NoCross => "no-cross",
        }
    }
}

/// Model and loss flags shared by `train` and `grad-check`.
#[derive(Debug, Args)]
pub struct ModelFlags {
    /// Disable a component; repeatable.
    #[arg(long, value_enum)]
    pub ablate: Vec<AblationName>,
    /// Comma-separated subset of basic,rec,ort,ec [default: all].
    #[arg(long)]
    pub losses: Option<String>,
    /// Weight of the orthogonality loss [default: 0.1].
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the co-occurrence loss [default: 0.1].
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Orthogonality penalty on signed or absolute cosines [default: signed].
    #[arg(long, value_enum)]
    pub ort: Option<OrtArg>,
    /// Video-level pooling [default: joint].
    #[arg(long, value_enum)]
    pub mmil: Option<MmilArg>,
    /// Residual source of local-global fusion [default: hhat].
    #[arg(long, value_enum)]
    pub lgsf_residual: Option<ResidualArg>,
    /// Drop the query/key/value projections of co-occurrence attention.
    #[arg(long)]
    pub no_secm_projections: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrtArg {
    Signed,
    Absolute,
}

impl From<OrtArg> for OrtMode {
    fn from(a: OrtArg) -> Self {
        match a {
            OrtArg::Signed => OrtMode::Signed,
            OrtArg::Absolute => OrtMode::Absolute,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MmilArg {
    Joint,
    Factorized,
}

impl From<MmilArg> for MmilMode {
    fn from(a: MmilArg) -> Self {
        match a {
            MmilArg::Joint => MmilMode::Joint,
            MmilArg::Factorized => MmilMode::Factorized,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ResidualArg {
    Hhat,
    Z,
}

impl From<ResidualArg> for LgsfResidual {
    fn from(a: ResidualArg) -> Self {
        match a {
            ResidualArg::Hhat => LgsfResidual::Hhat,
            ResidualArg::Z => LgsfResidual::Z,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, log and resolved config.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 60]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Clamped to the dataset size [default: 64].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// AdamW learning rate [default: 3e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// AdamW decoupled weight decay [default: 1e-3].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Number of enhancement layers [default: 4].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Holistic feature width [default: 256].
    #[arg(long)]
    pub d1: Option<usize>,
    /// Class-wise feature width [default: 128].
    #[arg(long)]
    pub d2: Option<usize>,
    /// Initialization and shuffling seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Process the samples of a batch in parallel (same results).
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Machine,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory, or a training directory (latest epoch is used).
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Probability threshold for a positive segment.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Minimum IoU for an event match.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// `text` for key = value lines, `machine` for JSON.
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Segments in the random sample.
    #[arg(long, default_value_t = 3)]
    pub t: usize,
    /// Number of classes.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub d1: usize,
    #[arg(long, default_value_t = 6)]
    pub d2: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Raw feature widths as DA,DV.
    #[arg(long, value_parser = parse_dims, default_value = "5,7")]
    pub dims: (usize, usize),
    /// Central-difference step.
    #[arg(long, default_value_t = mmcse::tensor::DEFAULT_STEP)]
    pub step: f64,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Checkpoint directory, or a training directory (latest epoch is used).
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, v) = s.split_once(',').ok_or("expected DA,DV")?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(v)?))
}

fn parse_cooc(s: &str) -> Result<CoocBoost, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [i, j, p] = parts.as_slice() else {
        return Err("expected I:J:P".into());
    };
    Ok(CoocBoost {
        first: i.parse().map_err(|e| format!("`{i}`: {e}"))?,
        second: j.parse().map_err(|e| format!("`{j}`: {e}"))?,
        prob: p.parse().map_err(|e| format!("`{p}`: {e}"))?,
    })
}
