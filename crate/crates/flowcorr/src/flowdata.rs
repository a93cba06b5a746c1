//! Core data model: packets, bidirectional flows, fixed-length feature
//! vectors, and the two-flow pair matrix consumed by the correlators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("flow id must be non-empty")]
    EmptyId,
    #[error("packet size must be positive")]
    NonPositiveSize,
    #[error("packet timestamp must be non-negative, got {0}")]
    NegativeTimestamp(f64),
    #[error("flow '{0}' has no packets in either direction")]
    EmptyFlow(String),
    #[error("flow length must be positive")]
    ZeroFlowLen,
    #[error("flow length mismatch: {left} vs {right}")]
    FlowLenMismatch { left: usize, right: usize },
}

/// Which side of the bidirectional flow a packet belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upstream,
    Downstream,
}

/// One observed packet: when it was seen, how big it was, which way it went.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub size: u32,
    pub direction: Direction,
}

impl PacketRecord {
    pub fn new(timestamp: f64, size: u32, direction: Direction) -> Result<Self, FlowError> {
        if size == 0 {
            return Err(FlowError::NonPositiveSize);
        }
        if !(timestamp >= 0.0) {
            return Err(FlowError::NegativeTimestamp(timestamp));
        }
        Ok(Self {
            timestamp,
            size,
            direction,
        })
    }
}

/// A bidirectional flow: an opaque id plus its packets, kept sorted by
/// timestamp so per-direction timestamps are non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    id: String,
    packets: Vec<PacketRecord>,
}

impl Flow {
    /// Builds a flow, sorting packets by timestamp (stable, so packets that
    /// share a timestamp keep their input order).
    pub fn new(id: impl Into<String>, mut packets: Vec<PacketRecord>) -> Result<Self, FlowError> {
        let id = id.into();
        if id.is_empty() {
            return Err(FlowError::EmptyId);
        }
        packets.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite ts"));
        Ok(Self { id, packets })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn packets(&self) -> &[PacketRecord] {
        &self.packets
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn direction(&self, dir: Direction) -> impl Iterator<Item = &PacketRecord> {
        self.packets.iter().filter(move |p| p.direction == dir)
    }
}

/// Per-channel affine multipliers applied to feature vectors after
/// truncation/padding. Recorded in checkpoints so scoring always uses the
/// multipliers the model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// Multiplier on inter-packet delays (default 1000: seconds -> ms).
    pub ipd: f64,
    /// Multiplier on packet sizes (default 1/1000: bytes -> KB).
    pub size: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            ipd: 1000.0,
            size: 1e-3,
        }
    }
}

impl ScalingConfig {
    /// Identity scaling, mostly for tests and oracles.
    pub fn unit() -> Self {
        Self { ipd: 1.0, size: 1.0 }
    }
}

/// The four fixed-length per-flow vectors: upstream/downstream inter-packet
/// delays and sizes, each truncated or zero-padded to `flow_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFeatures {
    pub ipd_up: Vec<f64>,
    pub size_up: Vec<f64>,
    pub ipd_down: Vec<f64>,
    pub size_down: Vec<f64>,
    pub flow_len: usize,
}

/// One of the four feature channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    IpdUp,
    SizeUp,
    IpdDown,
    SizeDown,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::IpdUp,
        Channel::SizeUp,
        Channel::IpdDown,
        Channel::SizeDown,
    ];
}

impl FlowFeatures {
    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::IpdUp => &self.ipd_up,
            Channel::SizeUp => &self.size_up,
            Channel::IpdDown => &self.ipd_down,
            Channel::SizeDown => &self.size_down,
        }
    }

    pub fn ipd(&self, dir: Direction) -> &[f64] {
        match dir {
            Direction::Upstream => &self.ipd_up,
            Direction::Downstream => &self.ipd_down,
        }
    }
}

/// Extracts the feature vectors of one flow.
///
/// Per direction: IPD[0] = 0, IPD[k] = t_k - t_{k-1}; the IPD and size
/// vectors are truncated to the first `flow_len` packets or zero-padded up
/// to `flow_len`. Scaling is applied last, so padding stays exactly zero.
pub fn compute_features(
    flow: &Flow,
    flow_len: usize,
    scaling: ScalingConfig,
) -> Result<FlowFeatures, FlowError> {
    if flow_len == 0 {
        return Err(FlowError::ZeroFlowLen);
    }
    if flow.is_empty() {
        return Err(FlowError::EmptyFlow(flow.id().to_string()));
    }
    let (ipd_up, size_up) = direction_vectors(flow, Direction::Upstream, flow_len, scaling);
    let (ipd_down, size_down) = direction_vectors(flow, Direction::Downstream, flow_len, scaling);
    Ok(FlowFeatures {
        ipd_up,
        size_up,
        ipd_down,
        size_down,
        flow_len,
    })
}

fn direction_vectors(
    flow: &Flow,
    dir: Direction,
    flow_len: usize,
    scaling: ScalingConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut ipd = vec![0.0; flow_len];
    let mut size = vec![0.0; flow_len];
    let mut prev_ts = None;
    for (k, pkt) in flow.direction(dir).take(flow_len).enumerate() {
        ipd[k] = match prev_ts {
            None => 0.0,
            Some(prev) => (pkt.timestamp - prev) * scaling.ipd,
        };
        size[k] = pkt.size as f64 * scaling.size;
        prev_ts = Some(pkt.timestamp);
    }
    (ipd, size)
}

/// How a two-flow pair matrix is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// 8 rows: both directions' IPDs then both directions' sizes.
    Tor,
    /// 2 rows: one direction's IPDs only.
    Stepping { direction: Direction },
}

impl PairMode {
    pub fn stepping_default() -> Self {
        PairMode::Stepping {
            direction: Direction::Upstream,
        }
    }

    pub fn rows(self) -> usize {
        match self {
            PairMode::Tor => 8,
            PairMode::Stepping { .. } => 2,
        }
    }
}

/// The 2-D input array for one candidate pair of flows, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    pub mode: PairMode,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PairMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Assembles the pair matrix for flows i and j.
///
/// Tor mode stacks [T^u_i; T^u_j; T^d_i; T^d_j; S^u_i; S^u_j; S^d_i; S^d_j];
/// stepping mode stacks the configured direction's IPDs [T_i; T_j].
pub fn make_pair_matrix(
    fi: &FlowFeatures,
    fj: &FlowFeatures,
    mode: PairMode,
) -> Result<PairMatrix, FlowError> {
    if fi.flow_len != fj.flow_len {
        return Err(FlowError::FlowLenMismatch {
            left: fi.flow_len,
            right: fj.flow_len,
        });
    }
    let cols = fi.flow_len;
    let rows: Vec<&[f64]> = match mode {
        PairMode::Tor => vec![
            &fi.ipd_up,
            &fj.ipd_up,
            &fi.ipd_down,
            &fj.ipd_down,
            &fi.size_up,
            &fj.size_up,
            &fi.size_down,
            &fj.size_down,
        ],
        PairMode::Stepping { direction } => vec![fi.ipd(direction), fj.ipd(direction)],
    };
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in &rows {
        data.extend_from_slice(r);
    }
    Ok(PairMatrix {
        mode,
        rows: rows.len(),
        cols,
        data,
    })
}

/// A pair matrix together with its ground-truth label and the ids it was
/// built from. `label` is true iff the two flows are segments of the same
/// connection.
#[derive(Debug, Clone)]
pub struct LabeledPair {
    pub pair: PairMatrix,
    pub label: bool,
    pub entry_id: String,
    pub exit_id: String,
}

impl LabeledPair {
    /// The label as the training target y in {0, 1}.
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flow_up(ts_sizes: &[(f64, u32)]) -> Flow {
        let packets = ts_sizes
            .iter()
            .map(|&(t, s)| PacketRecord::new(t, s, Direction::Upstream).unwrap())
            .collect();
        Flow::new("f", packets).unwrap()
    }

    #[test]
    fn ipd_definition_and_padding() {
        let flow = flow_up(&[(0.0, 100), (0.1, 200), (0.3, 50)]);
        let f = compute_features(&flow, 5, ScalingConfig::unit()).unwrap();
        let expected = [0.0, 0.1, 0.2, 0.0, 0.0];
        for (got, want) in f.ipd_up.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(f.size_up, vec![100.0, 200.0, 50.0, 0.0, 0.0]);
        assert_eq!(f.ipd_down, vec![0.0; 5]);
        assert_eq!(f.size_down, vec![0.0; 5]);
    }

    #[test]
    fn exact_length_no_padding_no_truncation() {
        let flow = flow_up(&[(0.0, 1), (1.0, 2), (2.0, 3)]);
        let f = compute_features(&flow, 3, ScalingConfig::unit()).unwrap();
        assert_eq!(f.ipd_up, vec![0.0, 1.0, 1.0]);
        assert_eq!(f.size_up, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn long_flow_truncated_to_first_len() {
        let pkts: Vec<(f64, u32)> = (0..10).map(|k| (k as f64, (k + 1) as u32)).collect();
        let flow = flow_up(&pkts);
        let f = compute_features(&flow, 5, ScalingConfig::unit()).unwrap();
        assert_eq!(f.size_up, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        // IPDs are built from the first 5 packets only.
        assert_eq!(f.ipd_up, vec![0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_flow_rejected() {
        let flow = Flow::new("f", vec![]).unwrap();
        assert_eq!(
            compute_features(&flow, 4, ScalingConfig::unit()),
            Err(FlowError::EmptyFlow("f".into()))
        );
    }

    #[test]
    fn scaling_applied_after_padding() {
        let flow = flow_up(&[(0.0, 1000), (0.5, 500)]);
        let f = compute_features(&flow, 4, ScalingConfig::default()).unwrap();
        assert_eq!(f.ipd_up, vec![0.0, 500.0, 0.0, 0.0]); // ms
        assert_eq!(f.size_up, vec![1.0, 0.5, 0.0, 0.0]); // KB
    }

    #[test]
    fn tor_pair_row_order() {
        let a = flow_up(&[(0.0, 10), (0.2, 20)]);
        let b = flow_up(&[(0.0, 30), (0.1, 40)]);
        let fa = compute_features(&a, 3, ScalingConfig::unit()).unwrap();
        let fb = compute_features(&b, 3, ScalingConfig::unit()).unwrap();
        let m = make_pair_matrix(&fa, &fb, PairMode::Tor).unwrap();
        assert_eq!(m.rows, 8);
        assert_eq!(m.cols, 3);
        assert_eq!(m.row(0), fa.ipd_up.as_slice());
        assert_eq!(m.row(1), fb.ipd_up.as_slice());
        assert_eq!(m.row(2), fa.ipd_down.as_slice());
        assert_eq!(m.row(3), fb.ipd_down.as_slice());
        assert_eq!(m.row(4), fa.size_up.as_slice());
        assert_eq!(m.row(5), fb.size_up.as_slice());
        assert_eq!(m.row(6), fa.size_down.as_slice());
        assert_eq!(m.row(7), fb.size_down.as_slice());
    }

    #[test]
    fn stepping_pair_is_two_ipd_rows() {
        let a = flow_up(&[(0.0, 10), (0.2, 20)]);
        let b = flow_up(&[(0.0, 30), (0.1, 40)]);
        let fa = compute_features(&a, 4, ScalingConfig::unit()).unwrap();
        let fb = compute_features(&b, 4, ScalingConfig::unit()).unwrap();
        let m = make_pair_matrix(&fa, &fb, PairMode::stepping_default()).unwrap();
        assert_eq!(m.rows, 2);
        assert_eq!(m.row(0), fa.ipd_up.as_slice());
        assert_eq!(m.row(1), fb.ipd_up.as_slice());
    }

    #[test]
    fn self_pair_duplicates_rows() {
        let a = flow_up(&[(0.0, 10), (0.2, 20)]);
        let fa = compute_features(&a, 3, ScalingConfig::unit()).unwrap();
        let m = make_pair_matrix(&fa, &fa, PairMode::Tor).unwrap();
        for r in (0..8).step_by(2) {
            assert_eq!(m.row(r), m.row(r + 1));
        }
    }

    #[test]
    fn mismatched_len_rejected() {
        let a = flow_up(&[(0.0, 10)]);
        let fa = compute_features(&a, 3, ScalingConfig::unit()).unwrap();
        let fb = compute_features(&a, 4, ScalingConfig::unit()).unwrap();
        assert_eq!(
            make_pair_matrix(&fa, &fb, PairMode::Tor),
            Err(FlowError::FlowLenMismatch { left: 3, right: 4 })
        );
    }

    #[test]
    fn invalid_packets_rejected() {
        assert_eq!(
            PacketRecord::new(0.0, 0, Direction::Upstream),
            Err(FlowError::NonPositiveSize)
        );
        assert_eq!(
            PacketRecord::new(-1.0, 10, Direction::Upstream),
            Err(FlowError::NegativeTimestamp(-1.0))
        );
        assert!(Flow::new("", vec![]).is_err());
    }

    proptest! {
        // Sum of nonzero IPDs equals last retained ts minus first ts.
        #[test]
        fn ipd_sum_matches_span(raw in prop::collection::vec((0.0f64..100.0, 1u32..2000), 1..40),
                                flow_len in 1usize..50) {
            let flow = flow_up(&raw);
            let f = compute_features(&flow, flow_len, ScalingConfig::unit()).unwrap();
            let n = raw.len().min(flow_len);
            let mut ts: Vec<f64> = flow.packets().iter().map(|p| p.timestamp).collect();
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let span = ts[n - 1] - ts[0];
            let sum: f64 = f.ipd_up.iter().sum();
            prop_assert!((sum - span).abs() < 1e-12);
        }

        // Determinism: identical inputs give identical vectors.
        #[test]
        fn features_deterministic(raw in prop::collection::vec((0.0f64..10.0, 1u32..1500), 1..20)) {
            let flow = flow_up(&raw);
            let a = compute_features(&flow, 16, ScalingConfig::default()).unwrap();
            let b = compute_features(&flow, 16, ScalingConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        // Swapping the argument order swaps i-rows and j-rows exactly.
        #[test]
        fn pair_swap_symmetry(a in prop::collection::vec((0.0f64..10.0, 1u32..1500), 1..10),
                              b in prop::collection::vec((0.0f64..10.0, 1u32..1500), 1..10)) {
            let fa = compute_features(&flow_up(&a), 8, ScalingConfig::unit()).unwrap();
            let fb = compute_features(&flow_up(&b), 8, ScalingConfig::unit()).unwrap();
            let ab = make_pair_matrix(&fa, &fb, PairMode::Tor).unwrap();
            let ba = make_pair_matrix(&fb, &fa, PairMode::Tor).unwrap();
            for r in (0..8).step_by(2) {
                prop_assert_eq!(ab.row(r), ba.row(r + 1));
                prop_assert_eq!(ab.row(r + 1), ba.row(r));
            }
        }

        // Padding never alters the first min(n, len) entries.
        #[test]
        fn padding_preserves_prefix(raw in prop::collection::vec((0.0f64..10.0, 1u32..1500), 1..20)) {
            let flow = flow_up(&raw);
            let short = compute_features(&flow, raw.len(), ScalingConfig::unit()).unwrap();
            let long = compute_features(&flow, raw.len() + 7, ScalingConfig::unit()).unwrap();
            prop_assert_eq!(&short.ipd_up[..], &long.ipd_up[..raw.len()]);
            prop_assert_eq!(&short.size_up[..], &long.size_up[..raw.len()]);
            prop_assert_eq!(&long.size_up[raw.len()..], &vec![0.0; 7][..]);
        }
    }
}
