//! Flow-correlation laboratory.
//!
//! Links the two observed segments of a relayed network connection by
//! their timing and size patterns alone. The crate provides:
//!
//! - a learned CNN correlator with hand-rolled backpropagation and Adam
//!   ([`corrnet`], [`nn`]),
//! - four classical statistical baselines ([`statcorr`]),
//! - a noisy-channel flow simulator for stepping-stone experiments
//!   ([`simnet`]),
//! - dataset ingestion from packet-record CSVs ([`ingest`]),
//! - and the evaluation protocol: ROC sweeps, AUC, argmax-pairing
//!   accuracy, per-correlation timing ([`eval`]).

pub mod corrnet;
pub mod eval;
pub mod flowdata;
pub mod ingest;
pub mod nn;
pub mod seeds;
pub mod simnet;
pub mod statcorr;

pub use corrnet::{
    build_network, decide, sample_negatives, score_flows, score_pair, train, DetectionThreshold,
    PresetConfig, PresetKind, PreparedDataset, TrainReport,
};
pub use flowdata::{
    compute_features, make_pair_matrix, Channel, Direction, Flow, FlowFeatures, LabeledPair,
    PacketRecord, PairMatrix, PairMode, ScalingConfig,
};
pub use ingest::{assemble_dataset, load_corpus, write_corpus, Dataset, PairManifest, Split};
pub use nn::{cross_entropy_loss, gradient_check, load_checkpoint, save_checkpoint, Network};
pub use simnet::{apply_channel, generate_base_flow, generate_paired_dataset, BaseFlowModel, ChannelModel};
pub use statcorr::{baseline_score, cosine, mutual_information, pearson, spearman, MetricKind};
