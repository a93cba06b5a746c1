//! Classical statistical correlation metrics used as baselines: Pearson,
//! cosine similarity, Spearman rank correlation, and a plug-in mutual
//! information estimate.
//!
//! Degenerate inputs (zero variance, all-zero vectors) score 0 instead of
//! NaN: zero-padded feature channels are common and must not poison a
//! channel mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{Channel, FlowFeatures};

/// Histogram bins per axis for the mutual information estimator.
pub const DEFAULT_MI_BINS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("vectors too short: length {len}, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("bin count must be at least 2, got {0}")]
    BadBins(usize),
    #[error("channel set must be non-empty")]
    EmptyChannels,
}

/// The baseline metric family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Pearson,
    Cosine,
    Spearman,
    MutualInformation,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Pearson,
        MetricKind::Cosine,
        MetricKind::Spearman,
        MetricKind::MutualInformation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Pearson => "pearson",
            MetricKind::Cosine => "cosine",
            MetricKind::Spearman => "spearman",
            MetricKind::MutualInformation => "mutual_information",
        }
    }
}

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < min {
        return Err(MetricError::TooShort { len: x.len(), min });
    }
    Ok(())
}

/// Sample Pearson correlation coefficient in [-1, 1].
///
/// Returns 0 if either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check_lengths(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine similarity in [-1, 1], plus a flag marking degenerate (all-zero)
/// input, which scores 0.
pub fn cosine_flagged(x: &[f64], y: &[f64]) -> Result<(f64, bool), MetricError> {
    check_lengths(x, y, 1)?;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx2: f64 = x.iter().map(|a| a * a).sum();
    let ny2: f64 = y.iter().map(|b| b * b).sum();
    if nx2 == 0.0 || ny2 == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((dot / (nx2 * ny2).sqrt()).clamp(-1.0, 1.0), false))
}

/// Cosine similarity in [-1, 1]; all-zero input scores 0.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    cosine_flagged(x, y).map(|(v, _)| v)
}

/// Fractional ranks (1-based), ties receiving the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 averaged
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: the Pearson coefficient of the rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check_lengths(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Plug-in mutual information estimate in bits, from an equal-width 2-D
/// histogram with `bins` bins per axis over each vector's own min-max range.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64, MetricError> {
    if bins < 2 {
        return Err(MetricError::BadBins(bins));
    }
    check_lengths(x, y, bins)?;
    let n = x.len();
    let bx = bin_indices(x, bins);
    let by = bin_indices(y, bins);
    let mut joint = vec![0u32; bins * bins];
    let mut px = vec![0u32; bins];
    let mut py = vec![0u32; bins];
    for k in 0..n {
        joint[bx[k] * bins + by[k]] += 1;
        px[bx[k]] += 1;
        py[by[k]] += 1;
    }
    let nf = n as f64;
    let term = |i: usize, j: usize| -> f64 {
        let c = joint[i * bins + j];
        if c == 0 {
            return 0.0;
        }
        let pij = c as f64 / nf;
        let pi = px[i] as f64 / nf;
        let pj = py[j] as f64 / nf;
        pij * (pij / (pi * pj)).log2()
    };
    // Cells (i,j) and (j,i) are summed as one group so swapping the
    // arguments gives a bitwise-identical result.
    let mut mi = 0.0;
    for i in 0..bins {
        mi += term(i, i);
        for j in i + 1..bins {
            mi += term(i, j) + term(j, i);
        }
    }
    Ok(mi)
}

fn bin_indices(x: &[f64], bins: usize) -> Vec<usize> {
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return vec![0; x.len()];
    }
    x.iter()
        .map(|&v| (((v - min) / range * bins as f64) as usize).min(bins - 1))
        .collect()
}

fn metric_value(kind: MetricKind, x: &[f64], y: &[f64], mi_bins: usize) -> Result<f64, MetricError> {
    match kind {
        MetricKind::Pearson => pearson(x, y),
        MetricKind::Cosine => cosine(x, y),
        MetricKind::Spearman => spearman(x, y),
        MetricKind::MutualInformation => mutual_information(x, y, mi_bins),
    }
}

/// Baseline pair score: the arithmetic mean of `metric` applied channel-wise
/// between the corresponding feature vectors of the two flows.
pub fn baseline_score(
    fi: &FlowFeatures,
    fj: &FlowFeatures,
    metric: MetricKind,
    channels: &[Channel],
) -> Result<f64, MetricError> {
    baseline_score_with_bins(fi, fj, metric, channels, DEFAULT_MI_BINS)
}

pub fn baseline_score_with_bins(
    fi: &FlowFeatures,
    fj: &FlowFeatures,
    metric: MetricKind,
    channels: &[Channel],
    mi_bins: usize,
) -> Result<f64, MetricError> {
    if channels.is_empty() {
        return Err(MetricError::EmptyChannels);
    }
    if fi.flow_len != fj.flow_len {
        return Err(MetricError::LengthMismatch { x: fi.flow_len, y: fj.flow_len });
    }
    let mut total = 0.0;
    for &c in channels {
        total += metric_value(metric, fi.channel(c), fj.channel(c), mi_bins)?;
    }
    Ok(total / channels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdata::{compute_features, Direction, Flow, PacketRecord, ScalingConfig};
    use proptest::prelude::*;

    #[test]
    fn pearson_exact_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(
            pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8
        );
    }

    #[test]
    fn pearson_zero_variance_is_zero() {
        assert_eq!(pearson(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn pearson_rejects_bad_shapes() {
        assert_eq!(
            pearson(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch { x: 1, y: 2 })
        );
        assert_eq!(
            pearson(&[1.0], &[1.0]),
            Err(MetricError::TooShort { len: 1, min: 2 })
        );
    }

    #[test]
    fn cosine_exact_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[2.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[3.0, 4.0], &[4.0, 3.0]).unwrap(), 0.96);
    }

    #[test]
    fn cosine_degenerate_flagged() {
        let (v, degenerate) = cosine_flagged(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(v, 0.0);
        assert!(degenerate);
        let (_, ok) = cosine_flagged(&[1.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!(!ok);
    }

    #[test]
    fn spearman_monotone_transforms() {
        let x: [f64; 5] = [0.1, 0.7, 1.3, 2.9, 4.0];
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
        let mut rev = x.to_vec();
        rev.reverse();
        assert_eq!(spearman(&x, &rev).unwrap(), -1.0);
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8
        );
    }

    #[test]
    fn spearman_averages_tied_ranks() {
        // x ties on 2.0: ranks [1, 2.5, 2.5, 4]
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn mi_constant_input_is_zero() {
        let x = vec![3.0; 16];
        let y: Vec<f64> = (0..16).map(|k| k as f64).collect();
        assert_eq!(mutual_information(&x, &y, 4).unwrap(), 0.0);
    }

    #[test]
    fn mi_identity_four_values_is_two_bits() {
        let x: Vec<f64> = (0..64).map(|k| (k % 4) as f64).collect();
        assert_eq!(mutual_information(&x, &x, 4).unwrap(), 2.0);
    }

    #[test]
    fn mi_independent_samples_near_zero() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mi = mutual_information(&x, &y, 8).unwrap();
        assert!(mi.abs() < 0.1, "mi = {mi}");
    }

    #[test]
    fn mi_rejects_bad_bins() {
        assert_eq!(
            mutual_information(&[1.0, 2.0], &[1.0, 2.0], 1),
            Err(MetricError::BadBins(1))
        );
    }

    fn features_of(vals: &[(f64, u32)]) -> FlowFeatures {
        let packets = vals
            .iter()
            .map(|&(t, s)| PacketRecord::new(t, s, Direction::Upstream).unwrap())
            .collect();
        let flow = Flow::new("f", packets).unwrap();
        compute_features(&flow, vals.len(), ScalingConfig::unit()).unwrap()
    }

    #[test]
    fn baseline_identical_flows_score_one() {
        let f = features_of(&[(0.0, 10), (0.3, 20), (0.9, 30), (1.0, 40)]);
        // Only upstream channels carry variance here; downstream is all-zero
        // and scores 0 per the zero-variance rule.
        let s = baseline_score(&f, &f, MetricKind::Pearson, &[Channel::IpdUp, Channel::SizeUp])
            .unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn baseline_singleton_channel_equals_metric() {
        let a = features_of(&[(0.0, 10), (0.3, 20), (0.9, 30)]);
        let b = features_of(&[(0.0, 15), (0.5, 25), (0.6, 35)]);
        let via_mean = baseline_score(&a, &b, MetricKind::Cosine, &[Channel::IpdUp]).unwrap();
        let direct = cosine(&a.ipd_up, &b.ipd_up).unwrap();
        assert_eq!(via_mean, direct);
    }

    #[test]
    fn baseline_mean_of_channels() {
        // Construct features whose two channels give pearson 0.8 and 0.4.
        let mut a = features_of(&[(0.0, 1), (1.0, 2), (2.0, 3), (3.0, 4)]);
        let mut b = features_of(&[(0.0, 1), (1.0, 3), (2.0, 2), (3.0, 4)]);
        a.ipd_up = vec![1.0, 2.0, 3.0, 4.0];
        b.ipd_up = vec![1.0, 3.0, 2.0, 4.0]; // pearson 0.8
        a.size_up = vec![1.0, 2.0, 3.0, 4.0];
        b.size_up = vec![2.0, 3.0, 1.0, 4.0]; // pearson 0.4
        let s = baseline_score(&a, &b, MetricKind::Pearson, &[Channel::IpdUp, Channel::SizeUp])
            .unwrap();
        assert!((s - 0.6).abs() < 1e-15);
    }

    #[test]
    fn baseline_empty_channels_rejected() {
        let f = features_of(&[(0.0, 10), (0.3, 20)]);
        assert_eq!(
            baseline_score(&f, &f, MetricKind::Pearson, &[]),
            Err(MetricError::EmptyChannels)
        );
    }

    proptest! {
        #[test]
        fn symmetry(x in prop::collection::vec(-100.0f64..100.0, 8..32),
                    y in prop::collection::vec(-100.0f64..100.0, 8..32)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            prop_assert_eq!(pearson(x, y).unwrap(), pearson(y, x).unwrap());
            prop_assert_eq!(cosine(x, y).unwrap(), cosine(y, x).unwrap());
            prop_assert_eq!(spearman(x, y).unwrap(), spearman(y, x).unwrap());
            prop_assert_eq!(
                mutual_information(x, y, 4).unwrap(),
                mutual_information(y, x, 4).unwrap()
            );
        }

        #[test]
        fn pearson_affine_invariance(x in prop::collection::vec(-10.0f64..10.0, 4..24),
                                     y in prop::collection::vec(-10.0f64..10.0, 4..24),
                                     a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r1 = pearson(x, y).unwrap();
            let r2 = pearson(&xt, y).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-12, "{r1} vs {r2}");
        }

        #[test]
        fn spearman_monotone_invariance(x in prop::collection::vec(-10.0f64..10.0, 4..24),
                                        y in prop::collection::vec(-10.0f64..10.0, 4..24)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            // exp is strictly monotone; ranks are unchanged, so equality is exact.
            let xt: Vec<f64> = x.iter().map(|v| (v * 0.1).exp()).collect();
            prop_assert_eq!(spearman(x, y).unwrap(), spearman(&xt, y).unwrap());
        }

        #[test]
        fn mi_non_negative(x in prop::collection::vec(-10.0f64..10.0, 8..64),
                           y in prop::collection::vec(-10.0f64..10.0, 8..64)) {
            let n = x.len().min(y.len());
            let mi = mutual_information(&x[..n], &y[..n], 4).unwrap();
            prop_assert!(mi >= -1e-12);
        }

        #[test]
        fn bounded_metrics(x in prop::collection::vec(-100.0f64..100.0, 4..32),
                           y in prop::collection::vec(-100.0f64..100.0, 4..32)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            for v in [pearson(x, y).unwrap(), cosine(x, y).unwrap(), spearman(x, y).unwrap()] {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
