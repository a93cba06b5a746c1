//! Evaluation harness: threshold sweeps, ROC/AUC, argmax-pairing accuracy,
//! and per-correlation timing.
//!
//! Everything uses the strict decision rule p > eta, matching
//! [`crate::corrnet::decide`], so the ROC and the decision rule can never
//! disagree.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::corrnet::{score_pair, CorrError};
use crate::flowdata::{make_pair_matrix, Channel, FlowError, FlowFeatures};
use crate::nn::Network;
use crate::statcorr::{baseline_score_with_bins, MetricError, MetricKind, DEFAULT_MI_BINS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score set must be non-empty")]
    EmptyScores,
    #[error("score matrix must be square for accuracy, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("parameter error: {0}")]
    Param(String),
    #[error("non-finite score at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl EvalError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Anything that can score a candidate pair of feature vectors.
pub trait Correlator: Sync {
    fn name(&self) -> String;
    fn score(&self, fi: &FlowFeatures, fj: &FlowFeatures) -> Result<f64, EvalError>;
}

/// Scores pairs with a trained network. Features must be extracted with the
/// network's recorded flow length and scaling (see
/// [`crate::corrnet::PreparedDataset::prepare`]).
pub struct NetCorrelator<'a> {
    pub net: &'a Network,
}

impl Correlator for NetCorrelator<'_> {
    fn name(&self) -> String {
        "corrnet".into()
    }

    fn score(&self, fi: &FlowFeatures, fj: &FlowFeatures) -> Result<f64, EvalError> {
        let pair = make_pair_matrix(fi, fj, self.net.pair_mode)?;
        Ok(score_pair(self.net, &pair)?)
    }
}

/// Scores pairs with one of the classical statistical metrics, averaged
/// over the configured channels.
pub struct BaselineCorrelator {
    pub metric: MetricKind,
    pub channels: Vec<Channel>,
    pub mi_bins: usize,
}

impl BaselineCorrelator {
    pub fn new(metric: MetricKind) -> Self {
        Self {
            metric,
            channels: Channel::ALL.to_vec(),
            mi_bins: DEFAULT_MI_BINS,
        }
    }
}

impl Correlator for BaselineCorrelator {
    fn name(&self) -> String {
        self.metric.name().into()
    }

    fn score(&self, fi: &FlowFeatures, fj: &FlowFeatures) -> Result<f64, EvalError> {
        Ok(baseline_score_with_bins(
            fi,
            fj,
            self.metric,
            &self.channels,
            self.mi_bins,
        )?)
    }
}

/// All-pairs score matrix: rows are entry flows, columns exit flows, and
/// `truth[r]` names the column holding row r's true partner.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub entry_ids: Vec<String>,
    pub exit_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub truth: Vec<usize>,
}

impl ScoreMatrix {
    pub fn from_parts(
        entry_ids: Vec<String>,
        exit_ids: Vec<String>,
        scores: Vec<f64>,
        truth: Vec<usize>,
    ) -> Result<Self, EvalError> {
        let rows = entry_ids.len();
        let cols = exit_ids.len();
        if scores.len() != rows * cols {
            return Err(EvalError::Param(format!(
                "expected {} scores for {rows}x{cols}, got {}",
                rows * cols,
                scores.len()
            )));
        }
        if truth.len() != rows || truth.iter().any(|&t| t >= cols) {
            return Err(EvalError::Param("truth mapping out of range".into()));
        }
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(EvalError::NonFinite {
                    row: i / cols,
                    col: i % cols,
                });
            }
        }
        Ok(Self {
            entry_ids,
            exit_ids,
            scores,
            truth,
        })
    }

    /// Scores every entry against every exit in parallel. Ground truth is
    /// positional: row k's partner is column k.
    pub fn compute(
        correlator: &dyn Correlator,
        entry_ids: Vec<String>,
        exit_ids: Vec<String>,
        entry_features: &[FlowFeatures],
        exit_features: &[FlowFeatures],
    ) -> Result<Self, EvalError> {
        let rows: Vec<Result<Vec<f64>, EvalError>> = entry_features
            .par_iter()
            .map(|fi| {
                exit_features
                    .iter()
                    .map(|fj| correlator.score(fi, fj))
                    .collect()
            })
            .collect();
        let mut scores = Vec::with_capacity(entry_features.len() * exit_features.len());
        for row in rows {
            scores.extend(row?);
        }
        let truth = (0..entry_ids.len()).collect();
        Self::from_parts(entry_ids, exit_ids, scores, truth)
    }

    pub fn rows(&self) -> usize {
        self.entry_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.exit_ids.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.scores[r * self.cols()..(r + 1) * self.cols()]
    }

    /// Scores of the ground-truth pairs.
    pub fn positive_scores(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.row(r)[self.truth[r]]).collect()
    }

    /// Scores of every non-associated pair (the true partner is excluded).
    pub fn negative_scores(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols().saturating_sub(1));
        for r in 0..self.rows() {
            for (c, &s) in self.row(r).iter().enumerate() {
                if c != self.truth[r] {
                    out.push(s);
                }
            }
        }
        out
    }
}

/// One operating point of the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub eta: f64,
    pub tp: f64,
    pub fp: f64,
}

/// Threshold sweep, ordered by ascending eta.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

fn count_above(sorted: &[f64], eta: f64) -> usize {
    // sorted ascending; strict comparison matches the decision rule.
    sorted.len() - sorted.partition_point(|&v| v <= eta)
}

/// Sweeps the detection threshold: at each eta, TP is the fraction of
/// positive scores strictly above it and FP the fraction of negatives.
pub fn roc_sweep(
    pos_scores: &[f64],
    neg_scores: &[f64],
    thresholds: &[f64],
) -> Result<RocCurve, EvalError> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let mut pos = pos_scores.to_vec();
    let mut neg = neg_scores.to_vec();
    pos.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    neg.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mut etas = thresholds.to_vec();
    etas.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let points = etas
        .into_iter()
        .map(|eta| RocPoint {
            eta,
            tp: count_above(&pos, eta) as f64 / pos.len() as f64,
            fp: count_above(&neg, eta) as f64 / neg.len() as f64,
        })
        .collect();
    Ok(RocCurve { points })
}

/// The default threshold grid: every distinct observed score plus 0 and 1,
/// giving an exact ROC with no binning artifacts.
pub fn default_thresholds(pos_scores: &[f64], neg_scores: &[f64]) -> Vec<f64> {
    let mut etas: Vec<f64> = pos_scores
        .iter()
        .chain(neg_scores)
        .copied()
        .chain([0.0, 1.0])
        .collect();
    etas.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    etas.dedup();
    etas
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64, EvalError> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let np = pos_scores.len();
    let nn = neg_scores.len();
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    // Average ranks over tie groups; rank sums stay exact in doubles.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np_f = np as f64;
    Ok((rank_sum_pos - np_f * (np_f + 1.0) / 2.0) / (np_f * nn as f64))
}

/// Trapezoidal area under a ROC curve, with the (0,0) and (1,1) endpoints
/// appended. Equals [`auc`] when the curve was swept over all distinct
/// scores.
pub fn auc_trapezoid(curve: &RocCurve) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fp, p.tp)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    area
}

/// Largest TP rate achievable with FP at or below `fp_target`, using the
/// strict > rule. TP and FP both fall as eta rises, so the smallest feasible
/// threshold is optimal.
pub fn tp_at_fp(pos_scores: &[f64], neg_scores: &[f64], fp_target: f64) -> Result<f64, EvalError> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let allowed = (fp_target * neg_scores.len() as f64).floor() as usize;
    if allowed >= neg_scores.len() {
        return Ok(1.0);
    }
    let mut neg = neg_scores.to_vec();
    neg.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let eta = neg[allowed]; // strictly-above count at this eta is <= allowed
    Ok(pos_scores.iter().filter(|&&p| p > eta).count() as f64 / pos_scores.len() as f64)
}

/// Argmax-pairing accuracy: each row declares its highest-scoring column as
/// its match (lowest column index on ties); accuracy is the fraction of rows
/// whose declared match is the ground truth.
pub fn raptor_accuracy(m: &ScoreMatrix) -> Result<f64, EvalError> {
    if m.rows() == 0 || m.rows() != m.cols() {
        return Err(EvalError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let mut correct = 0usize;
    for r in 0..m.rows() {
        let row = m.row(r);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == m.truth[r] {
            correct += 1;
        }
    }
    Ok(correct as f64 / m.rows() as f64)
}

/// Per-correlation latency statistics, wall-clock.
#[derive(Debug, Clone)]
pub struct TimingReport {
    pub name: String,
    pub evaluations: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Times a correlator over the given pairs after one untimed warm-up pass.
/// Report-only: latency depends on the hardware.
pub fn benchmark_correlation_time(
    correlator: &dyn Correlator,
    pairs: &[(&FlowFeatures, &FlowFeatures)],
    repetitions: usize,
) -> Result<TimingReport, EvalError> {
    let total = pairs.len() * repetitions;
    if total < 100 {
        return Err(EvalError::Param(format!(
            "need at least 100 evaluations, have {total}"
        )));
    }
    for (fi, fj) in pairs {
        correlator.score(fi, fj)?;
    }
    let mut samples_ms = Vec::with_capacity(total);
    for _ in 0..repetitions {
        for (fi, fj) in pairs {
            let start = Instant::now();
            let s = correlator.score(fi, fj)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(s);
            samples_ms.push(elapsed);
        }
    }
    samples_ms.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let mean_ms = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let p95_idx = ((samples_ms.len() as f64 * 0.95).ceil() as usize).min(samples_ms.len()) - 1;
    Ok(TimingReport {
        name: correlator.name(),
        evaluations: total,
        mean_ms,
        p95_ms: samples_ms[p95_idx],
    })
}

/// Writes a ROC curve as CSV (`eta,tp,fp`), full precision.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<(), EvalError> {
    let mut out = String::from("eta,tp,fp\n");
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.eta, p.tp, p.fp).expect("string write");
    }
    std::fs::write(path, out).map_err(|e| EvalError::io(path, e))
}

/// Writes a score matrix as CSV with row/column flow ids, full precision.
pub fn write_score_matrix_csv(path: &Path, m: &ScoreMatrix) -> Result<(), EvalError> {
    let mut out = String::from("entry_id");
    for id in &m.exit_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (r, id) in m.entry_ids.iter().enumerate() {
        out.push_str(id);
        for v in m.row(r) {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| EvalError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|k| format!("{prefix}{k}")).collect()
    }

    #[test]
    fn roc_basic_points() {
        let curve = roc_sweep(&[0.9, 0.8], &[0.1, 0.2], &[0.5]).unwrap();
        assert_eq!(curve.points, vec![RocPoint { eta: 0.5, tp: 1.0, fp: 0.0 }]);

        let curve = roc_sweep(&[0.9, 0.8], &[0.1, 0.2], &[-1.0]).unwrap();
        assert_eq!(curve.points[0].tp, 1.0);
        assert_eq!(curve.points[0].fp, 1.0);

        let curve = roc_sweep(&[0.9, 0.8], &[0.1, 0.2], &[1.0]).unwrap();
        assert_eq!(curve.points[0].tp, 0.0);
        assert_eq!(curve.points[0].fp, 0.0);
    }

    #[test]
    fn roc_strictness_matches_decide() {
        // A score exactly at eta is NOT above threshold.
        let curve = roc_sweep(&[0.5], &[0.5], &[0.5]).unwrap();
        assert_eq!(curve.points[0].tp, 0.0);
        assert_eq!(curve.points[0].fp, 0.0);
    }

    #[test]
    fn roc_rejects_empty_sets() {
        assert!(matches!(
            roc_sweep(&[], &[0.1], &[0.5]),
            Err(EvalError::EmptyScores)
        ));
    }

    #[test]
    fn auc_spot_values() {
        assert_eq!(auc(&[0.8, 0.9], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
    }

    /// O(np*nn) Mann-Whitney oracle.
    fn auc_brute(pos: &[f64], neg: &[f64]) -> f64 {
        let mut total = 0.0;
        for &p in pos {
            for &n in neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auc_matches_brute_force_with_ties() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..50 {
            let np = rng.gen_range(1..40);
            let nn = rng.gen_range(1..40);
            // Coarse grid forces ties.
            let pos: Vec<f64> = (0..np).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
            let neg: Vec<f64> = (0..nn).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
            let fast = auc(&pos, &neg).unwrap();
            let slow = auc_brute(&pos, &neg);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_equals_trapezoid_over_full_sweep() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..20 {
            let pos: Vec<f64> = (0..rng.gen_range(2..50)).map(|_| rng.gen()).collect();
            let neg: Vec<f64> = (0..rng.gen_range(2..50)).map(|_| rng.gen()).collect();
            let mut etas = default_thresholds(&pos, &neg);
            etas.insert(0, -1.0); // below-min sentinel closes the curve at (1,1)
            let curve = roc_sweep(&pos, &neg, &etas).unwrap();
            let a = auc(&pos, &neg).unwrap();
            let t = auc_trapezoid(&curve);
            assert!((a - t).abs() < 1e-9, "{a} vs {t}");
        }
    }

    #[test]
    fn tp_at_fp_simple() {
        let pos = [0.9, 0.8, 0.3];
        let neg = [0.5, 0.4, 0.2, 0.1];
        // fp_target 0 -> eta = max(neg) = 0.5, tp = 2/3
        let tp = tp_at_fp(&pos, &neg, 0.0).unwrap();
        assert!((tp - 2.0 / 3.0).abs() < 1e-12);
        // fp_target 1 -> everything allowed
        assert_eq!(tp_at_fp(&pos, &neg, 1.0).unwrap(), 1.0);
    }

    fn matrix_from(rows: usize, f: impl Fn(usize, usize) -> f64) -> ScoreMatrix {
        let scores: Vec<f64> = (0..rows * rows)
            .map(|i| f(i / rows, i % rows))
            .collect();
        ScoreMatrix::from_parts(
            ids("in", rows),
            ids("out", rows),
            scores,
            (0..rows).collect(),
        )
        .unwrap()
    }

    #[test]
    fn accuracy_diagonal_dominant_is_one() {
        let m = matrix_from(10, |r, c| if r == c { 1.0 } else { 0.1 });
        assert_eq!(raptor_accuracy(&m).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_constructed_94_percent() {
        // 50x50: rows 0..46 peak on the diagonal, the last 3 peak off it.
        let m = matrix_from(50, |r, c| {
            if r >= 47 {
                if c == (r + 1) % 50 { 0.9 } else { 0.1 }
            } else if r == c {
                0.9
            } else {
                0.1
            }
        });
        assert_eq!(raptor_accuracy(&m).unwrap(), 0.94);
    }

    #[test]
    fn accuracy_all_equal_ties_break_to_column_zero() {
        let n = 50;
        let m = matrix_from(n, |_, _| 0.5);
        // Every row declares column 0; only row 0 is correct.
        assert_eq!(raptor_accuracy(&m).unwrap(), 1.0 / n as f64);
    }

    #[test]
    fn accuracy_requires_square() {
        let m = ScoreMatrix::from_parts(ids("in", 2), ids("out", 3), vec![0.0; 6], vec![0, 1])
            .unwrap();
        assert!(matches!(
            raptor_accuracy(&m),
            Err(EvalError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn matrix_positive_negative_partition() {
        let m = matrix_from(4, |r, c| (r * 4 + c) as f64);
        assert_eq!(m.positive_scores().len(), 4);
        assert_eq!(m.negative_scores().len(), 12);
        let all: f64 = m.scores.iter().sum();
        let split: f64 =
            m.positive_scores().iter().sum::<f64>() + m.negative_scores().iter().sum::<f64>();
        assert_eq!(all, split);
    }

    #[test]
    fn matrix_rejects_non_finite() {
        let err = ScoreMatrix::from_parts(
            ids("in", 1),
            ids("out", 2),
            vec![0.1, f64::NAN],
            vec![0],
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::NonFinite { row: 0, col: 1 }));
    }

    struct DotCorrelator;
    impl Correlator for DotCorrelator {
        fn name(&self) -> String {
            "dot".into()
        }
        fn score(&self, fi: &FlowFeatures, fj: &FlowFeatures) -> Result<f64, EvalError> {
            Ok(fi
                .ipd_up
                .iter()
                .zip(&fj.ipd_up)
                .map(|(a, b)| a * b)
                .sum())
        }
    }

    fn toy_features(n: usize, seed: u64) -> Vec<FlowFeatures> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = 8;
                FlowFeatures {
                    ipd_up: (0..len).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    size_up: vec![0.0; len],
                    ipd_down: vec![0.0; len],
                    size_down: vec![0.0; len],
                    flow_len: len,
                }
            })
            .collect()
    }

    #[test]
    fn compute_fills_all_cells_deterministically() {
        let feats = toy_features(5, 1);
        let m = ScoreMatrix::compute(
            &DotCorrelator,
            ids("in", 5),
            ids("out", 5),
            &feats,
            &feats,
        )
        .unwrap();
        let m2 = ScoreMatrix::compute(
            &DotCorrelator,
            ids("in", 5),
            ids("out", 5),
            &feats,
            &feats,
        )
        .unwrap();
        assert_eq!(m.scores, m2.scores);
        assert_eq!(m.rows(), 5);
        assert_eq!(m.cols(), 5);
    }

    #[test]
    fn benchmark_needs_100_evals_and_reports_positive_mean() {
        let feats = toy_features(10, 2);
        let pairs: Vec<(&FlowFeatures, &FlowFeatures)> =
            feats.iter().zip(feats.iter().rev()).collect();
        assert!(matches!(
            benchmark_correlation_time(&DotCorrelator, &pairs, 9),
            Err(EvalError::Param(_))
        ));
        let report = benchmark_correlation_time(&DotCorrelator, &pairs, 10).unwrap();
        assert_eq!(report.evaluations, 100);
        assert!(report.mean_ms > 0.0);
        assert!(report.p95_ms >= report.mean_ms * 0.01);
    }

    #[test]
    fn roc_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.csv");
        let curve = roc_sweep(&[0.9], &[0.1], &[0.0, 0.5, 1.0]).unwrap();
        write_roc_csv(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("eta,tp,fp\n"));
        assert_eq!(text.lines().count(), 4);
    }

    proptest! {
        // Brute-force re-count agrees with roc_sweep at every threshold.
        #[test]
        fn roc_matches_brute_force(
            pos in prop::collection::vec(0.0f64..1.0, 1..30),
            neg in prop::collection::vec(0.0f64..1.0, 1..30),
        ) {
            let etas = default_thresholds(&pos, &neg);
            let curve = roc_sweep(&pos, &neg, &etas).unwrap();
            for p in &curve.points {
                let tp = pos.iter().filter(|&&v| v > p.eta).count() as f64 / pos.len() as f64;
                let fp = neg.iter().filter(|&&v| v > p.eta).count() as f64 / neg.len() as f64;
                prop_assert_eq!(tp, p.tp);
                prop_assert_eq!(fp, p.fp);
            }
        }

        // Raising eta never raises TP or FP.
        #[test]
        fn roc_monotone(
            pos in prop::collection::vec(0.0f64..1.0, 1..30),
            neg in prop::collection::vec(0.0f64..1.0, 1..30),
        ) {
            let etas = default_thresholds(&pos, &neg);
            let curve = roc_sweep(&pos, &neg, &etas).unwrap();
            for w in curve.points.windows(2) {
                prop_assert!(w[1].tp <= w[0].tp);
                prop_assert!(w[1].fp <= w[0].fp);
            }
        }

        // Accuracy is argmax-invariant under strictly increasing transforms.
        #[test]
        fn accuracy_monotone_invariant(seed in 0u64..500) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..12);
            let scores: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let m1 = ScoreMatrix::from_parts(
                ids("in", n), ids("out", n), scores.clone(), (0..n).collect()).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|&v| (3.0 * v).exp()).collect();
            let m2 = ScoreMatrix::from_parts(
                ids("in", n), ids("out", n), transformed, (0..n).collect()).unwrap();
            prop_assert_eq!(raptor_accuracy(&m1).unwrap(), raptor_accuracy(&m2).unwrap());
        }
    }
}
