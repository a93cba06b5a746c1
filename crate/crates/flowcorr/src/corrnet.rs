//! The learned correlator: architecture presets, pair scoring, the training
//! pipeline with negative sampling, and the threshold decision rule.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{
    compute_features, make_pair_matrix, Direction, FlowFeatures, FlowError, LabeledPair,
    PairMatrix, PairMode, ScalingConfig,
};
use crate::ingest::Dataset;
use crate::nn::{
    accumulate_backward, AdamConfig, AdamState, Gradients, LayerSpec, Network, NnError, Shape,
    Tensor,
};
use crate::seeds::derive_seed;

/// Samples accumulated per parallel work unit during batch gradient
/// evaluation. Fixed so the floating-point reduction order does not depend
/// on the worker count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("negative sampling needs {requested} other exits per entry, only {available} available")]
    NotEnoughExits { requested: usize, available: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("dataset has no associations")]
    EmptyDataset,
    #[error("threshold must lie in [0, 1], got {0}")]
    BadThreshold(f64),
}

/// Which architecture family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    Tor,
    Stepping,
}

/// Width-of-training knobs for one preset, with the architecture constants
/// resolved by the constructors. `scale` multiplies kernel counts and FC
/// widths (floored, minimum 1) for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetConfig {
    pub kind: PresetKind,
    pub flow_len: usize,
    pub scale: f64,
    /// k1 kernels of size (2, w1) in the first convolution.
    pub conv1_kernels: usize,
    pub conv1_width: usize,
    /// k2 kernels of size (conv2_height, w2); tor preset only.
    pub conv2_kernels: usize,
    pub conv2_width: usize,
    /// 4 per the architecture text, 2 per its parameter table; both work.
    pub conv2_height: usize,
    pub pool_window: usize,
    pub fc_sizes: Vec<usize>,
    pub stepping_direction: Direction,
    pub scaling: ScalingConfig,
    pub n_neg: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Redraw the negative set every epoch (seeded per epoch) instead of
    /// training against one fixed draw.
    pub resample_negatives: bool,
    pub early_stop: Option<EarlyStop>,
    /// Stop once the epoch mean loss drops below this value.
    pub stop_at_loss: Option<f64>,
}

/// Plateau-based early stopping on the epoch mean loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub min_delta: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            min_delta: 1e-5,
            patience: 10,
        }
    }
}

impl PresetConfig {
    /// The full-scale Tor-correlation architecture.
    pub fn tor(flow_len: usize) -> Self {
        Self {
            kind: PresetKind::Tor,
            flow_len,
            scale: 1.0,
            conv1_kernels: 2000,
            conv1_width: 30,
            conv2_kernels: 1000,
            conv2_width: 10,
            conv2_height: 4,
            pool_window: 5,
            fc_sizes: vec![3000, 800, 100],
            stepping_direction: Direction::Upstream,
            scaling: ScalingConfig::default(),
            n_neg: 199,
            learning_rate: 1e-4,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            resample_negatives: true,
            early_stop: Some(EarlyStop::default()),
            stop_at_loss: None,
        }
    }

    /// The simpler one-directional stepping-stone architecture.
    pub fn stepping(flow_len: usize) -> Self {
        Self {
            kind: PresetKind::Stepping,
            flow_len,
            scale: 1.0,
            conv1_kernels: 200,
            conv1_width: 10,
            conv2_kernels: 0,
            conv2_width: 0,
            conv2_height: 0,
            pool_window: 5,
            fc_sizes: vec![500, 100],
            stepping_direction: Direction::Upstream,
            scaling: ScalingConfig::default(),
            n_neg: 199,
            learning_rate: 1e-4,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            resample_negatives: true,
            early_stop: Some(EarlyStop::default()),
            stop_at_loss: None,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn pair_mode(&self) -> PairMode {
        match self.kind {
            PresetKind::Tor => PairMode::Tor,
            PresetKind::Stepping => PairMode::Stepping {
                direction: self.stepping_direction,
            },
        }
    }

    fn scaled(&self, width: usize) -> usize {
        ((width as f64 * self.scale).floor() as usize).max(1)
    }

    /// The layer stack this configuration resolves to.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let pool = LayerSpec::MaxPool {
            window: (1, self.pool_window),
            stride: (1, 1),
        };
        let mut specs = Vec::new();
        match self.kind {
            PresetKind::Tor => {
                specs.push(LayerSpec::Conv2d {
                    kernels: self.scaled(self.conv1_kernels),
                    kernel: (2, self.conv1_width),
                    stride: (2, 1),
                });
                specs.push(LayerSpec::Relu);
                specs.push(pool);
                specs.push(LayerSpec::Conv2d {
                    kernels: self.scaled(self.conv2_kernels),
                    kernel: (self.conv2_height, self.conv2_width),
                    stride: (4, 1),
                });
                specs.push(LayerSpec::Relu);
                specs.push(pool);
            }
            PresetKind::Stepping => {
                specs.push(LayerSpec::Conv2d {
                    kernels: self.scaled(self.conv1_kernels),
                    kernel: (2, self.conv1_width),
                    stride: (1, 1),
                });
                specs.push(LayerSpec::Relu);
                specs.push(pool);
            }
        }
        specs.push(LayerSpec::Flatten);
        for &fc in &self.fc_sizes {
            specs.push(LayerSpec::Dense {
                units: self.scaled(fc),
            });
            specs.push(LayerSpec::Relu);
        }
        specs.push(LayerSpec::Dense { units: 1 });
        specs.push(LayerSpec::Sigmoid);
        specs
    }

    pub fn input_shape(&self) -> Shape {
        Shape::Chw {
            c: 1,
            h: self.pair_mode().rows(),
            w: self.flow_len,
        }
    }

    fn validate(&self) -> Result<(), CorrError> {
        if self.scale <= 0.0 {
            return Err(CorrError::Config(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if self.flow_len < self.conv1_width {
            return Err(CorrError::Config(format!(
                "flow length {} shorter than first convolution width {}",
                self.flow_len, self.conv1_width
            )));
        }
        if self.kind == PresetKind::Tor && !matches!(self.conv2_height, 2 | 4) {
            return Err(CorrError::Config(format!(
                "conv2 height must be 2 or 4, got {}",
                self.conv2_height
            )));
        }
        if self.batch_size == 0 {
            return Err(CorrError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Builds a freshly initialized network for the preset, seeded from
/// `config.seed`.
pub fn build_network(config: &PresetConfig) -> Result<Network, CorrError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, "init", 0));
    Ok(Network::build(
        config.input_shape(),
        &config.layer_specs(),
        config.scaling,
        config.pair_mode(),
        &mut rng,
    )?)
}

/// A dataset with features extracted once, in manifest order, ready for
/// pairing.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub entry_ids: Vec<String>,
    pub exit_ids: Vec<String>,
    pub entry_features: Vec<FlowFeatures>,
    pub exit_features: Vec<FlowFeatures>,
    pub mode: PairMode,
}

impl PreparedDataset {
    pub fn prepare(
        dataset: &Dataset,
        flow_len: usize,
        scaling: ScalingConfig,
        mode: PairMode,
    ) -> Result<Self, CorrError> {
        if dataset.manifest.is_empty() {
            return Err(CorrError::EmptyDataset);
        }
        let mut cache: HashMap<String, FlowFeatures> = HashMap::new();
        let mut feature_of = |id: &String| -> Result<FlowFeatures, CorrError> {
            if let Some(f) = cache.get(id) {
                return Ok(f.clone());
            }
            let flow = dataset
                .flows
                .get(id)
                .ok_or_else(|| CorrError::Config(format!("flow '{id}' missing from dataset")))?;
            let f = compute_features(flow, flow_len, scaling)?;
            cache.insert(id.clone(), f.clone());
            Ok(f)
        };
        let mut entry_ids = Vec::new();
        let mut exit_ids = Vec::new();
        let mut entry_features = Vec::new();
        let mut exit_features = Vec::new();
        for (e, x) in &dataset.manifest.entries {
            entry_features.push(feature_of(e)?);
            exit_features.push(feature_of(x)?);
            entry_ids.push(e.clone());
            exit_ids.push(x.clone());
        }
        Ok(Self {
            entry_ids,
            exit_ids,
            entry_features,
            exit_features,
            mode,
        })
    }

    /// Number of ground-truth associations.
    pub fn len(&self) -> usize {
        self.entry_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entry_ids.is_empty()
    }

    fn pair(&self, i: usize, j: usize, label: bool) -> Result<LabeledPair, CorrError> {
        Ok(LabeledPair {
            pair: make_pair_matrix(&self.entry_features[i], &self.exit_features[j], self.mode)?,
            label,
            entry_id: self.entry_ids[i].clone(),
            exit_id: self.exit_ids[j].clone(),
        })
    }

    /// All associated pairs, labeled 1, in manifest order.
    pub fn positive_pairs(&self) -> Result<Vec<LabeledPair>, CorrError> {
        (0..self.len()).map(|i| self.pair(i, i, true)).collect()
    }
}

/// For each entry flow, draws `n_neg` exits of other connections uniformly
/// without replacement, never including the entry's true partner.
pub fn sample_negatives(
    prep: &PreparedDataset,
    n_neg: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>, CorrError> {
    let n = prep.len();
    if n == 0 {
        return Err(CorrError::EmptyDataset);
    }
    if n_neg >= n {
        return Err(CorrError::NotEnoughExits {
            requested: n_neg,
            available: n - 1,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * n_neg);
    for i in 0..n {
        let draw = rand::seq::index::sample(&mut rng, n - 1, n_neg);
        for k in draw.iter() {
            let j = if k >= i { k + 1 } else { k }; // skip the true partner
            out.push(prep.pair(i, j, false)?);
        }
    }
    Ok(out)
}

/// Detection threshold eta in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionThreshold(f64);

impl DetectionThreshold {
    pub fn new(eta: f64) -> Result<Self, CorrError> {
        if (0.0..=1.0).contains(&eta) {
            Ok(Self(eta))
        } else {
            Err(CorrError::BadThreshold(eta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Declares a pair correlated iff p strictly exceeds the threshold.
pub fn decide(p: f64, eta: DetectionThreshold) -> bool {
    p > eta.value()
}

/// Scores a pre-assembled pair matrix with a network, checking that the
/// matrix was built the way the network expects.
pub fn score_pair(net: &Network, pair: &PairMatrix) -> Result<f64, CorrError> {
    if pair.mode != net.pair_mode {
        return Err(CorrError::Config(format!(
            "pair mode {:?} does not match network mode {:?}",
            pair.mode, net.pair_mode
        )));
    }
    Ok(net.forward(&Tensor::from_pair(pair))?)
}

/// Scores two raw flows end to end, applying the network's recorded flow
/// length, scaling, and pair mode.
pub fn score_flows(
    net: &Network,
    entry: &crate::flowdata::Flow,
    exit: &crate::flowdata::Flow,
) -> Result<f64, CorrError> {
    let fi = compute_features(entry, net.flow_len(), net.scaling)?;
    let fj = compute_features(exit, net.flow_len(), net.scaling)?;
    let pair = make_pair_matrix(&fi, &fj, net.pair_mode)?;
    score_pair(net, &pair)
}

/// What training produced: the loss trajectory, the model, and counts.
#[derive(Debug)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub network: Network,
    pub duration: std::time::Duration,
    pub positive_count: usize,
    pub negatives_per_epoch: usize,
}

/// Trains a preset on a prepared dataset: positives plus sampled negatives,
/// shuffled mini-batches, mean cross-entropy loss, Adam updates.
///
/// Fully deterministic for a given (dataset, config): negative draws and
/// shuffles are seeded per epoch from `config.seed`, and batch gradients are
/// reduced in a fixed order regardless of worker count.
pub fn train(prep: &PreparedDataset, config: &PresetConfig) -> Result<TrainReport, CorrError> {
    let started = Instant::now();
    let mut net = build_network(config)?;
    if prep.is_empty() {
        return Err(CorrError::EmptyDataset);
    }
    let positives = prep.positive_pairs()?;
    let fixed_negatives = if config.resample_negatives {
        None
    } else {
        Some(sample_negatives(prep, config.n_neg, derive_seed(config.seed, "negatives", 0))?)
    };

    let mut adam = AdamState::new(AdamConfig::new(config.learning_rate), &net);
    let mut epoch_losses = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stall = 0usize;
    let mut negatives_per_epoch = 0;

    for epoch in 0..config.epochs {
        let resampled;
        let negatives: &[LabeledPair] = match &fixed_negatives {
            Some(fixed) => fixed,
            None => {
                resampled =
                    sample_negatives(prep, config.n_neg, derive_seed(config.seed, "negatives", epoch as u64))?;
                &resampled
            }
        };
        negatives_per_epoch = negatives.len();
        let samples: Vec<&LabeledPair> = positives.iter().chain(negatives.iter()).collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_samples: Vec<&LabeledPair> = batch.iter().map(|&i| samples[i]).collect();
            let (grads, batch_loss_sum) = batch_gradients(&net, &batch_samples)?;
            let batch_loss = batch_loss_sum / batch_samples.len() as f64;
            if !batch_loss.is_finite() {
                return Err(CorrError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            adam.step(&mut net, &grads)?;
            loss_sum += batch_loss_sum;
        }
        let epoch_loss = loss_sum / samples.len() as f64;
        epoch_losses.push(epoch_loss);

        if let Some(target) = config.stop_at_loss {
            if epoch_loss < target {
                break;
            }
        }
        if let Some(es) = config.early_stop {
            if best_loss - epoch_loss < es.min_delta {
                stall += 1;
                if stall >= es.patience {
                    break;
                }
            } else {
                stall = 0;
            }
        }
        best_loss = best_loss.min(epoch_loss);
    }

    Ok(TrainReport {
        epoch_losses,
        network: net,
        duration: started.elapsed(),
        positive_count: positives.len(),
        negatives_per_epoch,
    })
}

/// Mean gradient over one mini-batch plus the summed sample loss.
///
/// Samples are processed in fixed chunks; chunk results are reduced in chunk
/// order so the result is identical for any worker count.
fn batch_gradients(
    net: &Network,
    samples: &[&LabeledPair],
) -> Result<(Gradients, f64), CorrError> {
    let chunk_results: Vec<Result<(Gradients, f64), NnError>> = samples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = Gradients::zeros_like(net);
            let mut loss_sum = 0.0;
            for sample in chunk {
                let input = Tensor::from_pair(&sample.pair);
                let (loss, _) = accumulate_backward(net, &input, sample.target(), &mut acc)?;
                loss_sum += loss;
            }
            Ok((acc, loss_sum))
        })
        .collect();

    let mut total: Option<Gradients> = None;
    let mut loss_sum = 0.0;
    for r in chunk_results {
        let (g, l) = r?;
        match &mut total {
            None => total = Some(g),
            Some(t) => t.add_assign(&g),
        }
        loss_sum += l;
    }
    let mut total = total.expect("non-empty batch");
    total.scale(1.0 / samples.len() as f64);
    Ok((total, loss_sum))
}
