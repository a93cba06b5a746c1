//! Synthetic generation of correlated flow pairs through a noisy relay
//! channel: exponential inter-packet delays, truncated log-normal sizes,
//! Laplace timing jitter, and Bernoulli packet drops.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{Direction, Flow, PacketRecord};
use crate::ingest::{Dataset, PairManifest, Split};
use crate::seeds::derive_seed;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid model parameter: {0}")]
    InvalidParam(String),
    #[error("channel dropped every packet of flow '{0}'")]
    AllDropped(String),
    #[error("flow '{0}' is empty")]
    EmptyFlow(String),
    #[error("pair {index}: channel emptied the flow twice in a row")]
    RetryExhausted { index: usize },
}

/// Relay channel noise: per-packet Laplace timing jitter (parameterized by
/// its standard deviation) and independent Bernoulli drops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub jitter_std: f64,
    pub drop_rate: f64,
    pub seed: u64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.jitter_std >= 0.0) {
            return Err(SimError::InvalidParam(format!(
                "jitter_std must be >= 0, got {}",
                self.jitter_std
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(SimError::InvalidParam(format!(
                "drop_rate must be in [0, 1], got {}",
                self.drop_rate
            )));
        }
        Ok(())
    }

    /// The identity channel: no jitter, no drops.
    pub fn identity(seed: u64) -> Self {
        Self {
            jitter_std: 0.0,
            drop_rate: 0.0,
            seed,
        }
    }
}

/// Base traffic model for one synthetic flow: `packet_count` packets with
/// i.i.d. exponential inter-packet delays and i.i.d. log-normal sizes
/// truncated to [size_min, size_max] bytes, one direction, timestamps
/// cumulative from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseFlowModel {
    pub packet_count: usize,
    pub mean_ipd: f64,
    pub size_log_mu: f64,
    pub size_log_sigma: f64,
    pub size_min: u32,
    pub size_max: u32,
    pub seed: u64,
}

impl Default for BaseFlowModel {
    fn default() -> Self {
        Self {
            packet_count: 300,
            mean_ipd: 0.05,
            size_log_mu: 6.0,
            size_log_sigma: 0.6,
            size_min: 40,
            size_max: 1500,
            seed: 0,
        }
    }
}

impl BaseFlowModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.packet_count == 0 {
            return Err(SimError::InvalidParam("packet_count must be >= 1".into()));
        }
        if !(self.mean_ipd > 0.0) {
            return Err(SimError::InvalidParam(format!(
                "mean_ipd must be > 0, got {}",
                self.mean_ipd
            )));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(SimError::InvalidParam(format!(
                "size bounds [{}, {}] invalid",
                self.size_min, self.size_max
            )));
        }
        Ok(())
    }
}

/// Draws one base flow from the model (upstream direction).
pub fn generate_base_flow(model: &BaseFlowModel, id: &str) -> Result<Flow, SimError> {
    model.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(model.seed);
    let ipd = Exp::new(1.0 / model.mean_ipd).expect("validated rate");
    let size_dist = LogNormal::new(model.size_log_mu, model.size_log_sigma)
        .map_err(|e| SimError::InvalidParam(e.to_string()))?;

    let mut packets = Vec::with_capacity(model.packet_count);
    let mut t = 0.0;
    for k in 0..model.packet_count {
        if k > 0 {
            t += ipd.sample(&mut rng);
        }
        let size = sample_truncated_size(&size_dist, model, &mut rng);
        packets.push(
            PacketRecord::new(t, size, Direction::Upstream).expect("positive size, t >= 0"),
        );
    }
    Flow::new(id, packets).map_err(|e| SimError::InvalidParam(e.to_string()))
}

fn sample_truncated_size(
    dist: &LogNormal<f64>,
    model: &BaseFlowModel,
    rng: &mut impl Rng,
) -> u32 {
    // Rejection sampling keeps the truncated distribution's shape; the
    // acceptance region covers almost all mass for the default parameters.
    for _ in 0..1000 {
        let v = dist.sample(rng).round();
        if v >= model.size_min as f64 && v <= model.size_max as f64 {
            return v as u32;
        }
    }
    model.size_min.max((model.size_max + model.size_min) / 2)
}

/// Passes a flow through the channel: each packet is independently dropped
/// with `drop_rate`, each survivor's timestamp is perturbed by Laplace noise
/// with scale jitter_std/sqrt(2), and timestamps are re-sorted (and floored
/// at zero) to restore a valid packet stream. Sizes are unchanged.
pub fn apply_channel(flow: &Flow, channel: &ChannelModel) -> Result<Flow, SimError> {
    apply_channel_as(flow, channel, flow.id())
}

/// `apply_channel` with an explicit output flow id.
pub fn apply_channel_as(flow: &Flow, channel: &ChannelModel, id: &str) -> Result<Flow, SimError> {
    channel.validate()?;
    if flow.is_empty() {
        return Err(SimError::EmptyFlow(flow.id().to_string()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(channel.seed);
    // Laplace with standard deviation sigma has scale b = sigma/sqrt(2).
    let b = channel.jitter_std / std::f64::consts::SQRT_2;
    let mut packets = Vec::with_capacity(flow.packets().len());
    for p in flow.packets() {
        let dropped = rng.gen_bool(channel.drop_rate);
        if dropped {
            continue;
        }
        let ts = (p.timestamp + laplace(b, &mut rng)).max(0.0);
        packets.push(PacketRecord {
            timestamp: ts,
            size: p.size,
            direction: p.direction,
        });
    }
    if packets.is_empty() {
        return Err(SimError::AllDropped(flow.id().to_string()));
    }
    // Flow::new re-sorts by timestamp, restoring monotonicity.
    Flow::new(id, packets).map_err(|e| SimError::InvalidParam(e.to_string()))
}

/// Inverse-CDF Laplace draw with scale `b`.
fn laplace(b: f64, rng: &mut impl Rng) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.gen::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Generates `n_pairs` connections, each an ingress flow plus the egress
/// flow the channel turned it into, with the manifest recording the
/// associations. Per-pair seeds derive from `seed`, so generation is
/// deterministic and parallelizable; a pair whose egress comes out empty is
/// retried once with a fresh channel seed.
pub fn generate_paired_dataset(
    n_pairs: usize,
    base: &BaseFlowModel,
    channel: &ChannelModel,
    seed: u64,
) -> Result<Dataset, SimError> {
    if n_pairs == 0 {
        return Err(SimError::InvalidParam("n_pairs must be >= 1".into()));
    }
    base.validate()?;
    channel.validate()?;

    let pairs: Vec<Result<(Flow, Flow), SimError>> = (0..n_pairs)
        .into_par_iter()
        .map(|k| {
            let ingress_id = format!("in-{k:05}");
            let egress_id = format!("out-{k:05}");
            let pair_base = BaseFlowModel {
                seed: derive_seed(seed, "base", k as u64),
                ..*base
            };
            let ingress = generate_base_flow(&pair_base, &ingress_id)?;
            let first_try = apply_channel_as(
                &ingress,
                &ChannelModel {
                    seed: derive_seed(seed, "channel", k as u64),
                    ..*channel
                },
                &egress_id,
            );
            let egress = match first_try {
                Ok(f) => f,
                Err(SimError::AllDropped(_)) => apply_channel_as(
                    &ingress,
                    &ChannelModel {
                        seed: derive_seed(seed, "channel-retry", k as u64),
                        ..*channel
                    },
                    &egress_id,
                )
                .map_err(|e| match e {
                    SimError::AllDropped(_) => SimError::RetryExhausted { index: k },
                    other => other,
                })?,
                Err(e) => return Err(e),
            };
            Ok((ingress, egress))
        })
        .collect();

    let mut flows = std::collections::HashMap::with_capacity(2 * n_pairs);
    let mut entries = Vec::with_capacity(n_pairs);
    for pair in pairs {
        let (ingress, egress) = pair?;
        entries.push((ingress.id().to_string(), egress.id().to_string()));
        flows.insert(ingress.id().to_string(), ingress);
        flows.insert(egress.id().to_string(), egress);
    }
    Ok(Dataset {
        flows,
        manifest: PairManifest::new(entries).expect("generated ids are unique"),
        split: Split::Full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_flow_deterministic_and_shaped() {
        let model = BaseFlowModel {
            packet_count: 50,
            seed: 42,
            ..BaseFlowModel::default()
        };
        let a = generate_base_flow(&model, "f").unwrap();
        let b = generate_base_flow(&model, "f").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.packets().len(), 50);
        assert_eq!(a.packets()[0].timestamp, 0.0);
        assert!(a
            .packets()
            .iter()
            .all(|p| (40..=1500).contains(&p.size) && p.direction == Direction::Upstream));
    }

    #[test]
    fn single_packet_flow_at_time_zero() {
        let model = BaseFlowModel {
            packet_count: 1,
            seed: 1,
            ..BaseFlowModel::default()
        };
        let f = generate_base_flow(&model, "f").unwrap();
        assert_eq!(f.packets().len(), 1);
        assert_eq!(f.packets()[0].timestamp, 0.0);
    }

    #[test]
    fn mean_duration_matches_closed_form() {
        // 300 packets, mean IPD 0.1 -> expected duration 299 * 0.1 = 29.9 s.
        let mut total = 0.0;
        let n_flows = 1000;
        for k in 0..n_flows {
            let model = BaseFlowModel {
                packet_count: 300,
                mean_ipd: 0.1,
                seed: k,
                ..BaseFlowModel::default()
            };
            let f = generate_base_flow(&model, "f").unwrap();
            total += f.packets().last().unwrap().timestamp;
        }
        let mean = total / n_flows as f64;
        assert!(
            (mean - 29.9).abs() < 29.9 * 0.05,
            "mean duration {mean}, expected ~29.9"
        );
    }

    fn uniform_flow(n: usize, ipd: f64) -> Flow {
        let packets = (0..n)
            .map(|k| PacketRecord::new(k as f64 * ipd, 100, Direction::Upstream).unwrap())
            .collect();
        Flow::new("src", packets).unwrap()
    }

    #[test]
    fn identity_channel_is_identity() {
        let flow = uniform_flow(200, 0.05);
        let out = apply_channel(&flow, &ChannelModel::identity(3)).unwrap();
        assert_eq!(flow, out);
    }

    #[test]
    fn full_drop_raises_empty_flow_error() {
        let flow = uniform_flow(50, 0.05);
        let channel = ChannelModel {
            jitter_std: 0.0,
            drop_rate: 1.0,
            seed: 5,
        };
        assert!(matches!(
            apply_channel(&flow, &channel),
            Err(SimError::AllDropped(_))
        ));
    }

    #[test]
    fn mean_absolute_jitter_matches_laplace_expectation() {
        // E|X| = b = jitter_std / sqrt(2) for Laplace noise. Wide spacing
        // keeps re-sorting from moving packets across indices.
        let flow = uniform_flow(10_000, 1.0);
        let channel = ChannelModel {
            jitter_std: 0.005,
            drop_rate: 0.0,
            seed: 7,
        };
        let out = apply_channel(&flow, &channel).unwrap();
        let expected = 0.005 / std::f64::consts::SQRT_2;
        let mean_abs: f64 = flow
            .packets()
            .iter()
            .zip(out.packets())
            .map(|(a, b)| (a.timestamp - b.timestamp).abs())
            .sum::<f64>()
            / 10_000.0;
        assert!(
            (mean_abs - expected).abs() < expected * 0.05,
            "mean |jitter| {mean_abs}, expected ~{expected}"
        );
    }

    #[test]
    fn channel_never_grows_flow_or_changes_sizes() {
        let flow = uniform_flow(500, 0.02);
        let channel = ChannelModel {
            jitter_std: 0.01,
            drop_rate: 0.2,
            seed: 11,
        };
        let out = apply_channel(&flow, &channel).unwrap();
        assert!(out.packets().len() <= flow.packets().len());
        // Sizes are a sub-multiset of the input sizes (all 100 here).
        assert!(out.packets().iter().all(|p| p.size == 100));
        // Timestamps non-decreasing after the re-sort.
        assert!(out
            .packets()
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn surviving_count_within_binomial_bounds() {
        let n = 10_000;
        let drop = 0.1;
        let flow = uniform_flow(n, 0.01);
        let channel = ChannelModel {
            jitter_std: 0.0,
            drop_rate: drop,
            seed: 13,
        };
        let out = apply_channel(&flow, &channel).unwrap();
        let expected = n as f64 * (1.0 - drop);
        let sigma = (n as f64 * drop * (1.0 - drop)).sqrt();
        let got = out.packets().len() as f64;
        assert!(
            (got - expected).abs() < 3.0 * sigma,
            "survivors {got}, expected {expected} +- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn paired_dataset_deterministic_and_labeled() {
        let base = BaseFlowModel {
            packet_count: 40,
            ..BaseFlowModel::default()
        };
        let channel = ChannelModel {
            jitter_std: 0.005,
            drop_rate: 0.01,
            seed: 0,
        };
        let a = generate_paired_dataset(20, &base, &channel, 99).unwrap();
        let b = generate_paired_dataset(20, &base, &channel, 99).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.flows, b.flows);
        assert_eq!(a.manifest.len(), 20);
        a.validate().unwrap();
        for (e, x) in &a.manifest.entries {
            assert!(e.starts_with("in-"));
            assert!(x.starts_with("out-"));
        }
    }

    #[test]
    fn identity_channel_pairs_have_equal_ipds() {
        let base = BaseFlowModel {
            packet_count: 30,
            ..BaseFlowModel::default()
        };
        let ds =
            generate_paired_dataset(5, &base, &ChannelModel::identity(0), 7).unwrap();
        for (e, x) in &ds.manifest.entries {
            let fi = &ds.flows[e];
            let fj = &ds.flows[x];
            let ts_i: Vec<f64> = fi.packets().iter().map(|p| p.timestamp).collect();
            let ts_j: Vec<f64> = fj.packets().iter().map(|p| p.timestamp).collect();
            assert_eq!(ts_i, ts_j);
        }
    }

    #[test]
    fn drop_rate_thins_egress_flows() {
        let base = BaseFlowModel {
            packet_count: 300,
            ..BaseFlowModel::default()
        };
        let channel = ChannelModel {
            jitter_std: 0.005,
            drop_rate: 0.01,
            seed: 0,
        };
        let ds = generate_paired_dataset(2000, &base, &channel, 3).unwrap();
        let total_out: usize = ds
            .manifest
            .entries
            .iter()
            .map(|(_, x)| ds.flows[x].packets().len())
            .sum();
        let mean_out = total_out as f64 / 2000.0;
        // ~1% fewer packets on average, within 0.2 percentage points.
        let deficit = (300.0 - mean_out) / 300.0;
        assert!(
            (deficit - 0.01).abs() < 0.002,
            "mean egress packets {mean_out}, deficit {deficit}"
        );
    }
}
