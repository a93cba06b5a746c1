//! Flag definitions. Every subcommand's parsed arguments serialize to the
//! run manifest written next to its outputs, and `--config` replays one.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use flowcorr::flowdata::{Channel, Direction};
use flowcorr::statcorr::MetricKind;

#[derive(Debug, Parser)]
#[command(
    name = "flowcorr",
    about = "Flow-correlation laboratory: simulate, train, evaluate, compare, benchmark",
    version
)]
pub struct Cli {
    /// Worker threads for pair scoring and dataset generation
    /// (default: available cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Re-run a previously written run manifest instead of giving flags.
    #[arg(long, conflicts_with = "command")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<RunConfig>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    /// Generate a synthetic paired corpus through a noisy relay channel.
    Simulate(SimulateArgs),
    /// Train a correlator preset and write a checkpoint.
    Train(TrainArgs),
    /// Score all pairs with a checkpoint; write ROC, AUC, and accuracy.
    Eval(EvalArgs),
    /// Score all pairs with a statistical baseline metric.
    Baseline(BaselineArgs),
    /// Per-correlation timing of the learned correlator and all baselines.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of connections (ingress/egress flow pairs) to generate.
    #[arg(long)]
    pub pairs: usize,

    /// Output directory for packets.csv and manifest.csv.
    #[arg(long)]
    pub out: PathBuf,

    /// Packets per ingress flow.
    #[arg(long, default_value_t = 300)]
    pub packets: usize,

    /// Mean inter-packet delay in seconds (exponential).
    #[arg(long, default_value_t = 0.05)]
    pub mean_ipd: f64,

    /// Standard deviation of the Laplace timing jitter, seconds.
    #[arg(long, default_value_t = 0.005)]
    pub jitter_std: f64,

    /// Bernoulli per-packet drop probability.
    #[arg(long, default_value_t = 0.01)]
    pub drop: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetArg {
    Tor,
    Stepping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionArg {
    U,
    D,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::U => Direction::Upstream,
            DirectionArg::D => Direction::Downstream,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Corpus directory (packets.csv + manifest.csv).
    #[arg(long)]
    pub data: PathBuf,

    /// Where to write the checkpoint document.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Where to write the per-epoch loss history CSV
    /// (default: checkpoint path with a .loss.csv suffix).
    #[arg(long)]
    pub loss_out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = PresetArg::Stepping)]
    pub preset: PresetArg,

    /// Uniform multiplier on kernel counts and FC widths.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,

    #[arg(long, default_value_t = 300)]
    pub flow_len: usize,

    /// Negative samples per entry flow.
    #[arg(long, default_value_t = 199)]
    pub neg: usize,

    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    #[arg(long, default_value_t = 64)]
    pub batch: usize,

    /// Kernel height of the second convolution (tor preset).
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4), default_value_t = 4)]
    pub conv2_height: u8,

    /// Which direction's IPDs feed the stepping-mode pair matrix.
    #[arg(long, value_enum, default_value_t = DirectionArg::U)]
    pub stepping_direction: DirectionArg,

    /// Multiplier applied to IPDs before training/scoring.
    #[arg(long, default_value_t = 1000.0)]
    pub ipd_scale: f64,

    /// Multiplier applied to packet sizes before training/scoring.
    #[arg(long, default_value_t = 1e-3)]
    pub size_scale: f64,

    /// Train against one fixed negative draw instead of re-sampling
    /// negatives every epoch.
    #[arg(long, default_value_t = false)]
    pub fixed_negatives: bool,

    /// Fraction of associations for the train split; the rest is test.
    #[arg(long)]
    pub split_fraction: Option<f64>,

    /// Which side of the split to train on (default: train when
    /// --split-fraction is given, otherwise the whole corpus).
    #[arg(long, value_enum)]
    pub use_split: Option<SplitChoice>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    /// Output path for the ROC curve CSV (eta,tp,fp).
    #[arg(long)]
    pub roc: PathBuf,

    /// Output path for the JSON summary
    /// (default: ROC path with a .summary.json suffix).
    #[arg(long)]
    pub summary: Option<PathBuf>,

    /// Optional output path for the full score-matrix CSV.
    #[arg(long)]
    pub matrix: Option<PathBuf>,

    /// FP targets at which TP is reported in the summary.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.01, 0.001])]
    pub fp_targets: Vec<f64>,

    #[arg(long)]
    pub split_fraction: Option<f64>,

    /// Which side of the split to evaluate (default: test when
    /// --split-fraction is given, otherwise the whole corpus).
    #[arg(long, value_enum)]
    pub use_split: Option<SplitChoice>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Pearson,
    Cosine,
    Spearman,
    Mi,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Pearson => MetricKind::Pearson,
            MetricArg::Cosine => MetricKind::Cosine,
            MetricArg::Spearman => MetricKind::Spearman,
            MetricArg::Mi => MetricKind::MutualInformation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelArg {
    IpdUp,
    SizeUp,
    IpdDown,
    SizeDown,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::IpdUp => Channel::IpdUp,
            ChannelArg::SizeUp => Channel::SizeUp,
            ChannelArg::IpdDown => Channel::IpdDown,
            ChannelArg::SizeDown => Channel::SizeDown,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum)]
    pub metric: MetricArg,

    /// Feature channels the metric is averaged over.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = vec![ChannelArg::IpdUp, ChannelArg::SizeUp,
                                  ChannelArg::IpdDown, ChannelArg::SizeDown])]
    pub channels: Vec<ChannelArg>,

    /// Histogram bins per axis for mutual information.
    #[arg(long, default_value_t = 8)]
    pub mi_bins: usize,

    #[arg(long)]
    pub roc: PathBuf,

    #[arg(long)]
    pub summary: Option<PathBuf>,

    #[arg(long)]
    pub matrix: Option<PathBuf>,

    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.01, 0.001])]
    pub fp_targets: Vec<f64>,

    #[arg(long, default_value_t = 300)]
    pub flow_len: usize,

    #[arg(long, default_value_t = 1000.0)]
    pub ipd_scale: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub size_scale: f64,

    #[arg(long)]
    pub split_fraction: Option<f64>,

    #[arg(long, value_enum)]
    pub use_split: Option<SplitChoice>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// Checkpoint for the learned correlator; without it only the
    /// statistical baselines are timed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Number of distinct pairs to time.
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,

    /// Timing repetitions over the pair set.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,

    /// Optional CSV output (name,evaluations,mean_ms,p95_ms).
    /// Timings are hardware-dependent and not reproducible byte-for-byte.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Flow length for baseline features when no checkpoint is given.
    #[arg(long, default_value_t = 300)]
    pub flow_len: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
