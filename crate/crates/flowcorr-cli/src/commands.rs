//! Subcommand implementations and the exit-code policy.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use flowcorr::corrnet::{self, CorrError, PresetConfig, PreparedDataset};
use flowcorr::eval::{
    self, auc, default_thresholds, raptor_accuracy, roc_sweep, tp_at_fp, BaselineCorrelator,
    Correlator, EvalError, NetCorrelator, ScoreMatrix,
};
use flowcorr::flowdata::{Channel, ScalingConfig};
use flowcorr::ingest::{self, Dataset, IngestError};
use flowcorr::nn::{load_checkpoint, save_checkpoint, CheckpointError};
use flowcorr::seeds::derive_seed;
use flowcorr::simnet::{self, BaseFlowModel, ChannelModel, SimError};
use flowcorr::statcorr::MetricKind;

use crate::args::{
    BaselineArgs, BenchArgs, EvalArgs, RunConfig, SimulateArgs, SplitChoice, TrainArgs, PresetArg,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::BadSplitFraction(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParam(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CorrError> for CliError {
    fn from(e: CorrError) -> Self {
        match e {
            CorrError::Config(_) | CorrError::BadThreshold(_) => CliError::Usage(e.to_string()),
            CorrError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Param(_) => CliError::Usage(e.to_string()),
            EvalError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            EvalError::Corr(c) => c.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub fn run(cmd: &RunConfig) -> Result<(), CliError> {
    match cmd {
        RunConfig::Simulate(a) => cmd_simulate(cmd, a),
        RunConfig::Train(a) => cmd_train(cmd, a),
        RunConfig::Eval(a) => cmd_eval(cmd, a),
        RunConfig::Baseline(a) => cmd_baseline(cmd, a),
        RunConfig::Bench(a) => cmd_bench(cmd, a),
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed config {}: {e}", path.display())))
}

/// Writes the full effective configuration next to a run's outputs so the
/// run can be replayed byte-for-byte with `--config`.
fn write_run_manifest(path: &Path, cmd: &RunConfig) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(cmd)
        .map_err(|e| CliError::Data(format!("cannot serialize run config: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

fn cmd_simulate(cmd: &RunConfig, a: &SimulateArgs) -> Result<(), CliError> {
    let base = BaseFlowModel {
        packet_count: a.packets,
        mean_ipd: a.mean_ipd,
        ..BaseFlowModel::default()
    };
    let channel = ChannelModel {
        jitter_std: a.jitter_std,
        drop_rate: a.drop,
        seed: 0, // per-pair seeds derive from the run seed
    };
    let dataset = simnet::generate_paired_dataset(a.pairs, &base, &channel, a.seed)?;
    ingest::write_corpus(&a.out, &dataset)?;
    write_run_manifest(&a.out.join("run_config.json"), cmd)?;
    println!(
        "simulate: wrote {} pairs ({} flows) to {}",
        dataset.manifest.len(),
        dataset.flows.len(),
        a.out.display()
    );
    Ok(())
}

/// Loads a corpus directory and picks the requested split of it.
fn load_split(
    data: &Path,
    split_fraction: Option<f64>,
    use_split: Option<SplitChoice>,
    default_choice: SplitChoice,
    seed: u64,
) -> Result<Dataset, CliError> {
    let ds = ingest::load_corpus(data)?;
    let choice = match (split_fraction, use_split) {
        (None, None) => SplitChoice::All,
        (Some(_), None) => default_choice,
        (_, Some(c)) => c,
    };
    if choice == SplitChoice::All {
        return Ok(ds);
    }
    let fraction = split_fraction.unwrap_or(0.5);
    let (train, test) =
        ingest::assemble_dataset(&ds.flows, &ds.manifest, fraction, derive_seed(seed, "split", 0))?;
    Ok(match choice {
        SplitChoice::Train => train,
        SplitChoice::Test => test,
        SplitChoice::All => unreachable!(),
    })
}

fn preset_config(a: &TrainArgs) -> PresetConfig {
    let mut cfg = match a.preset {
        PresetArg::Tor => PresetConfig::tor(a.flow_len),
        PresetArg::Stepping => PresetConfig::stepping(a.flow_len),
    };
    cfg.scale = a.scale;
    cfg.n_neg = a.neg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.conv2_height = a.conv2_height as usize;
    cfg.stepping_direction = a.stepping_direction.into();
    cfg.scaling = ScalingConfig {
        ipd: a.ipd_scale,
        size: a.size_scale,
    };
    cfg.seed = a.seed;
    cfg.resample_negatives = !a.fixed_negatives;
    cfg
}

fn cmd_train(cmd: &RunConfig, a: &TrainArgs) -> Result<(), CliError> {
    let dataset = load_split(&a.data, a.split_fraction, a.use_split, SplitChoice::Train, a.seed)?;
    let cfg = preset_config(a);
    let prep = PreparedDataset::prepare(&dataset, cfg.flow_len, cfg.scaling, cfg.pair_mode())?;
    let report = corrnet::train(&prep, &cfg)?;

    save_checkpoint(&report.network, &a.checkpoint)?;
    let loss_path = a
        .loss_out
        .clone()
        .unwrap_or_else(|| sibling(&a.checkpoint, ".loss.csv"));
    let mut csv = String::from("epoch,mean_loss\n");
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        writeln!(csv, "{epoch},{loss}").expect("string write");
    }
    fs::write(&loss_path, csv)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", loss_path.display())))?;
    write_run_manifest(&sibling(&a.checkpoint, ".run.json"), cmd)?;

    println!(
        "train: {} positives, {} negatives/epoch, {} epochs, final loss {:.6}, {:.1}s; checkpoint {}",
        report.positive_count,
        report.negatives_per_epoch,
        report.epoch_losses.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report.duration.as_secs_f64(),
        a.checkpoint.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TpAtFpEntry {
    fp_target: f64,
    tp: f64,
}

#[derive(Serialize)]
struct EvalSummary {
    correlator: String,
    pairs_scored: usize,
    positives: usize,
    negatives: usize,
    auc: f64,
    raptor_accuracy: f64,
    tp_at_fp: Vec<TpAtFpEntry>,
}

fn score_and_report(
    cmd: &RunConfig,
    correlator: &dyn Correlator,
    prep: &PreparedDataset,
    roc_path: &Path,
    summary_path: Option<&Path>,
    matrix_path: Option<&Path>,
    fp_targets: &[f64],
) -> Result<(), CliError> {
    let matrix = ScoreMatrix::compute(
        correlator,
        prep.entry_ids.clone(),
        prep.exit_ids.clone(),
        &prep.entry_features,
        &prep.exit_features,
    )?;
    let pos = matrix.positive_scores();
    let neg = matrix.negative_scores();
    let curve = roc_sweep(&pos, &neg, &default_thresholds(&pos, &neg))?;
    let auc_value = auc(&pos, &neg)?;
    let accuracy = raptor_accuracy(&matrix)?;
    let tp_entries = fp_targets
        .iter()
        .map(|&fp| {
            Ok(TpAtFpEntry {
                fp_target: fp,
                tp: tp_at_fp(&pos, &neg, fp)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    eval::write_roc_csv(roc_path, &curve)?;
    let summary = EvalSummary {
        correlator: correlator.name(),
        pairs_scored: matrix.rows() * matrix.cols(),
        positives: pos.len(),
        negatives: neg.len(),
        auc: auc_value,
        raptor_accuracy: accuracy,
        tp_at_fp: tp_entries,
    };
    let default_summary = sibling(roc_path, ".summary.json");
    let summary_path = summary_path.unwrap_or(&default_summary);
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Data(format!("cannot serialize summary: {e}")))?;
    text.push('\n');
    fs::write(summary_path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", summary_path.display())))?;
    if let Some(mpath) = matrix_path {
        eval::write_score_matrix_csv(mpath, &matrix)?;
    }
    write_run_manifest(&sibling(roc_path, ".run.json"), cmd)?;

    println!(
        "{}: {} pairs, auc {:.4}, raptor accuracy {:.4}; roc {}",
        correlator.name(),
        summary.pairs_scored,
        auc_value,
        accuracy,
        roc_path.display()
    );
    Ok(())
}

fn cmd_eval(cmd: &RunConfig, a: &EvalArgs) -> Result<(), CliError> {
    let net = load_checkpoint(&a.checkpoint)?;
    let dataset = load_split(&a.data, a.split_fraction, a.use_split, SplitChoice::Test, a.seed)?;
    let prep = PreparedDataset::prepare(&dataset, net.flow_len(), net.scaling, net.pair_mode)?;
    let correlator = NetCorrelator { net: &net };
    score_and_report(
        cmd,
        &correlator,
        &prep,
        &a.roc,
        a.summary.as_deref(),
        a.matrix.as_deref(),
        &a.fp_targets,
    )
}

fn cmd_baseline(cmd: &RunConfig, a: &BaselineArgs) -> Result<(), CliError> {
    let dataset = load_split(&a.data, a.split_fraction, a.use_split, SplitChoice::Test, a.seed)?;
    let scaling = ScalingConfig {
        ipd: a.ipd_scale,
        size: a.size_scale,
    };
    // Baseline features keep both directions; pair assembly is metric-side.
    let prep = PreparedDataset::prepare(
        &dataset,
        a.flow_len,
        scaling,
        flowcorr::flowdata::PairMode::stepping_default(),
    )?;
    let correlator = BaselineCorrelator {
        metric: a.metric.into(),
        channels: a.channels.iter().map(|&c| Channel::from(c)).collect(),
        mi_bins: a.mi_bins,
    };
    if correlator.channels.is_empty() {
        return Err(CliError::Usage("at least one channel is required".into()));
    }
    score_and_report(
        cmd,
        &correlator,
        &prep,
        &a.roc,
        a.summary.as_deref(),
        a.matrix.as_deref(),
        &a.fp_targets,
    )
}

fn cmd_bench(cmd: &RunConfig, a: &BenchArgs) -> Result<(), CliError> {
    let dataset = ingest::load_corpus(&a.data)?;
    let net = match &a.checkpoint {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };
    let (flow_len, scaling, mode) = match &net {
        Some(n) => (n.flow_len(), n.scaling, n.pair_mode),
        None => (
            a.flow_len,
            ScalingConfig::default(),
            flowcorr::flowdata::PairMode::stepping_default(),
        ),
    };
    let prep = PreparedDataset::prepare(&dataset, flow_len, scaling, mode)?;
    let n_pairs = a.pairs.min(prep.len());
    if n_pairs == 0 {
        return Err(CliError::Data("corpus has no associations to time".into()));
    }
    let pairs: Vec<(&flowcorr::flowdata::FlowFeatures, &flowcorr::flowdata::FlowFeatures)> = (0
        ..n_pairs)
        .map(|i| (&prep.entry_features[i], &prep.exit_features[i]))
        .collect();

    let mut reports = Vec::new();
    if let Some(n) = &net {
        let c = NetCorrelator { net: n };
        reports.push(eval::benchmark_correlation_time(&c, &pairs, a.reps)?);
    }
    for metric in MetricKind::ALL {
        let c = BaselineCorrelator::new(metric);
        reports.push(eval::benchmark_correlation_time(&c, &pairs, a.reps)?);
    }

    println!("{:<20} {:>8} {:>12} {:>12}", "correlator", "evals", "mean_ms", "p95_ms");
    let mut csv = String::from("name,evaluations,mean_ms,p95_ms\n");
    for r in &reports {
        println!(
            "{:<20} {:>8} {:>12.4} {:>12.4}",
            r.name, r.evaluations, r.mean_ms, r.p95_ms
        );
        writeln!(csv, "{},{},{},{}", r.name, r.evaluations, r.mean_ms, r.p95_ms)
            .expect("string write");
    }
    if let Some(out) = &a.out {
        fs::write(out, csv)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", out.display())))?;
        write_run_manifest(&sibling(out, ".run.json"), cmd)?;
    }
    Ok(())
}
