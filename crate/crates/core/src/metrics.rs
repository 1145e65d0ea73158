//! Evaluation over predicted label sequences.
//!
//! Per-class scores average precision and recall over classes and combine the
//! two averages; overall scores pool true positives over all images. The
//! combination defaults to the geometric mean; [`F1Mean::Harmonic`] gives the
//! textbook F1. Duplicated predictions are removed before scoring and
//! counted separately by [`duplicate_ratio`].

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("evaluation batch is empty")]
    Empty,
    #[error("{gt} ground-truth entries but {pred} predictions")]
    CountMismatch { gt: usize, pred: usize },
    #[error("image {image}: label {label} outside {n_classes} classes")]
    LabelOutOfRange {
        image: usize,
        label: usize,
        n_classes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Mean {
    #[default]
    Geometric,
    Harmonic,
}

impl F1Mean {
    pub fn combine(self, precision: f64, recall: f64) -> f64 {
        match self {
            F1Mean::Geometric => libm::sqrt(precision * recall),
            F1Mean::Harmonic if precision + recall > 0.0 => {
                2.0 * precision * recall / (precision + recall)
            }
            F1Mean::Harmonic => 0.0,
        }
    }
}

/// Ground-truth sets and raw predicted sequences over real class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationBatch {
    n_classes: usize,
    ground_truth: Vec<Vec<usize>>,
    predictions: Vec<Vec<usize>>,
}

impl EvaluationBatch {
    pub fn new(
        n_classes: usize,
        ground_truth: Vec<Vec<usize>>,
        predictions: Vec<Vec<usize>>,
    ) -> Result<Self, MetricsError> {
        if ground_truth.len() != predictions.len() {
            return Err(MetricsError::CountMismatch {
                gt: ground_truth.len(),
                pred: predictions.len(),
            });
        }
        for (image, labels) in ground_truth.iter().chain(&predictions).enumerate() {
            if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
                return Err(MetricsError::LabelOutOfRange {
                    image: image % ground_truth.len().max(1),
                    label,
                    n_classes,
                });
            }
        }
        Ok(Self {
            n_classes,
            ground_truth,
            predictions,
        })
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn ground_truth(&self) -> &[Vec<usize>] {
        &self.ground_truth
    }

    pub fn predictions(&self) -> &[Vec<usize>] {
        &self.predictions
    }

    /// Same batch with every prediction sequence deduplicated.
    pub fn deduplicated(&self) -> Self {
        Self {
            n_classes: self.n_classes,
            ground_truth: self.ground_truth.clone(),
            predictions: self.predictions.iter().map(|p| dedup(p).0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Precision or recall had a zero denominator and was scored 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub c_p: f64,
    pub c_r: f64,
    pub c_f1: f64,
    pub o_p: f64,
    pub o_r: f64,
    pub o_f1: f64,
    pub duplicate_ratio: f64,
    pub order_rigidness: f64,
    /// No class pair ever co-occurred; `order_rigidness` is 1 by convention.
    pub no_cooccurrence: bool,
    pub per_class: Vec<ClassScore>,
    pub f1_mean: F1Mean,
}

/// Full report: dedup, then P/R/F1, duplicate ratio of the raw sequences and
/// order-rigidness of the deduplicated ones.
pub fn evaluate(batch: &EvaluationBatch, mean: F1Mean) -> Result<MetricsReport, MetricsError> {
    let clean = batch.deduplicated();
    let mut report = prf1(&clean, mean)?;
    report.duplicate_ratio = duplicate_ratio(batch)?;
    let (rigid, none) = order_rigidness(&clean)?;
    report.order_rigidness = rigid;
    report.no_cooccurrence = none;
    Ok(report)
}

/// Per-class and overall precision/recall/F1. Expects deduplicated predictions.
pub fn prf1(batch: &EvaluationBatch, mean: F1Mean) -> Result<MetricsReport, MetricsError> {
    if batch.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = batch.n_classes;
    let mut tp = vec![0usize; n];
    let mut predicted = vec![0usize; n];
    let mut actual = vec![0usize; n];
    let mut in_gt = vec![false; n];
    for (gt, pred) in batch.ground_truth.iter().zip(&batch.predictions) {
        for &l in gt {
            in_gt[l] = true;
            actual[l] += 1;
        }
        for &l in pred {
            predicted[l] += 1;
            if in_gt[l] {
                tp[l] += 1;
            }
        }
        for &l in gt {
            in_gt[l] = false;
        }
    }

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class: Vec<ClassScore> = (0..n)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], actual[c]);
            ClassScore {
                true_positives: tp[c],
                predicted: predicted[c],
                actual: actual[c],
                precision,
                recall,
                f1: mean.combine(precision, recall),
                degenerate: predicted[c] == 0 || actual[c] == 0,
            }
        })
        .collect();

    let c_p = per_class.iter().map(|s| s.precision).sum::<f64>() / n as f64;
    let c_r = per_class.iter().map(|s| s.recall).sum::<f64>() / n as f64;
    let total_tp: usize = tp.iter().sum();
    let o_p = ratio(total_tp, predicted.iter().sum());
    let o_r = ratio(total_tp, actual.iter().sum());
    Ok(MetricsReport {
        c_p,
        c_r,
        c_f1: mean.combine(c_p, c_r),
        o_p,
        o_r,
        o_f1: mean.combine(o_p, o_r),
        duplicate_ratio: 0.0,
        order_rigidness: 1.0,
        no_cooccurrence: true,
        per_class,
        f1_mean: mean,
    })
}

/// Keeps the first occurrence of each label.
pub fn dedup(sequence: &[usize]) -> (Vec<usize>, bool) {
    let mut out: Vec<usize> = Vec::with_capacity(sequence.len());
    for &l in sequence {
        if !out.contains(&l) {
            out.push(l);
        }
    }
    let had = out.len() != sequence.len();
    (out, had)
}

/// Fraction of images whose raw sequence repeats a label.
pub fn duplicate_ratio(batch: &EvaluationBatch) -> Result<f64, MetricsError> {
    if batch.is_empty() {
        return Err(MetricsError::Empty);
    }
    let with_dups = batch.predictions.iter().filter(|p| dedup(p).1).count();
    Ok(with_dups as f64 / batch.len() as f64)
}

/// For every class pair seen together in a predicted sequence, counts how often
/// each relative order occurs; returns Σ max / Σ total and whether no pair
/// ever co-occurred (value 1 in that case).
pub fn order_rigidness(batch: &EvaluationBatch) -> Result<(f64, bool), MetricsError> {
    if batch.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = batch.n_classes;
    // before[a * n + b]: a precedes b
    let mut before = vec![0u64; n * n];
    for seq in &batch.predictions {
        for (i, &a) in seq.iter().enumerate() {
            for &b in &seq[i + 1..] {
                if a != b {
                    before[a * n + b] += 1;
                }
            }
        }
    }
    let mut kept = 0u64;
    let mut total = 0u64;
    for a in 0..n {
        for b in a + 1..n {
            let ab = before[a * n + b];
            let ba = before[b * n + a];
            kept += ab.max(ba);
            total += ab + ba;
        }
    }
    if total == 0 {
        Ok((1.0, true))
    } else {
        Ok((kept as f64 / total as f64, false))
    }
}

/// Symmetric `n × n` count matrix (row-major), zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceDiff {
    pub n_classes: usize,
    pub counts: Vec<i64>,
}

impl CooccurrenceDiff {
    pub fn get(&self, a: usize, b: usize) -> i64 {
        self.counts[a * self.n_classes + b]
    }
}

/// Predicted co-occurrence minus ground-truth co-occurrence, diagonal zeroed.
pub fn cooccurrence_diff(batch: &EvaluationBatch) -> CooccurrenceDiff {
    let n = batch.n_classes;
    let mut counts = vec![0i64; n * n];
    let mut accumulate = |labels: &[usize], sign: i64| {
        let (labels, _) = dedup(labels);
        for &a in &labels {
            for &b in &labels {
                if a != b {
                    counts[a * n + b] += sign;
                }
            }
        }
    };
    for (gt, pred) in batch.ground_truth.iter().zip(&batch.predictions) {
        accumulate(pred, 1);
        accumulate(gt, -1);
    }
    CooccurrenceDiff {
        n_classes: n,
        counts,
    }
}
