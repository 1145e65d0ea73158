//! Target construction for the sequence loss.
//!
//! A sample with label set `L` is trained against `n = |L| + 1` decoder steps:
//! one step per label followed by the end token, which is always pinned to
//! the last step. Fixed-order strategies sort `L` once; the orderless
//! strategies pick the label-to-step bijection from the predictions:
//!
//! * minimal loss alignment ([`align_mla`]) minimizes the summed
//!   `-log p` over all bijections with the assignment solver;
//! * predicted label alignment ([`align_pla`]) first keeps every label the
//!   decoder already emitted (at its earliest step) and solves only for the
//!   rest.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assignment::{solve_assignment, AssignmentError, CostMatrix};
use crate::data::LabelVocabulary;
use crate::linalg::argmax;

/// Probabilities are clamped to this floor before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

const COLUMN_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("empty label set")]
    EmptyLabels,
    #[error("label {0} appears more than once")]
    DuplicateLabel(usize),
    #[error("label {label} outside vocabulary of size {size}")]
    LabelOutOfRange { label: usize, size: usize },
    #[error("prediction matrix has {got} steps, expected {expected}")]
    StepMismatch { expected: usize, got: usize },
    #[error("target count must be at least 1")]
    ZeroTargets,
    #[error("column {step} is not a distribution: {reason}")]
    BadColumn { step: usize, reason: &'static str },
    #[error("{0} needs predictions; use align_mla/align_pla")]
    NeedsPredictions(OrderingStrategy),
    #[error("{0} is not an orderless strategy")]
    NotOrderless(OrderingStrategy),
    #[error("random_order requires a seed")]
    MissingSeed,
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// How ground-truth labels are laid out over decoder steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrderingStrategy {
    FrequentFirst,
    RareFirst,
    DictionaryOrder,
    RandomOrder,
    Mla,
    Pla,
}

impl OrderingStrategy {
    pub const ALL: [OrderingStrategy; 6] = [
        OrderingStrategy::FrequentFirst,
        OrderingStrategy::RareFirst,
        OrderingStrategy::DictionaryOrder,
        OrderingStrategy::RandomOrder,
        OrderingStrategy::Mla,
        OrderingStrategy::Pla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrderingStrategy::FrequentFirst => "frequent_first",
            OrderingStrategy::RareFirst => "rare_first",
            OrderingStrategy::DictionaryOrder => "dictionary_order",
            OrderingStrategy::RandomOrder => "random_order",
            OrderingStrategy::Mla => "mla",
            OrderingStrategy::Pla => "pla",
        }
    }

    /// True for the two strategies that align against predictions.
    pub fn is_orderless(self) -> bool {
        matches!(self, OrderingStrategy::Mla | OrderingStrategy::Pla)
    }
}

impl fmt::Display for OrderingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy {0:?} (expected one of frequent_first, rare_first, dictionary_order, random_order, mla, pla)")]
pub struct UnknownStrategy(pub alloc::string::String);

impl FromStr for OrderingStrategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OrderingStrategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownStrategy(s.into()))
    }
}

/// Per-step class distributions, `m` classes by `n_steps` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    n_classes: usize,
    /// Column-major: step `t` occupies `t*m..(t+1)*m`.
    probs: Vec<f64>,
    /// Argmax per step; `None` for padding columns.
    predicted_labels: Vec<Option<usize>>,
}

impl PredictionMatrix {
    /// Builds from per-step columns, taking the argmax (first maximum) as the
    /// predicted label.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self, AlignmentError> {
        let n_classes = columns.first().map_or(0, |c| c.as_ref().len());
        let mut probs = Vec::with_capacity(n_classes * columns.len());
        let mut predicted = Vec::with_capacity(columns.len());
        for (step, col) in columns.iter().enumerate() {
            let col = col.as_ref();
            if col.len() != n_classes || n_classes == 0 {
                return Err(AlignmentError::BadColumn {
                    step,
                    reason: "inconsistent length",
                });
            }
            if col.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(AlignmentError::BadColumn {
                    step,
                    reason: "entry outside [0, 1]",
                });
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(AlignmentError::BadColumn {
                    step,
                    reason: "column does not sum to 1",
                });
            }
            probs.extend_from_slice(col);
            predicted.push(Some(argmax(col)));
        }
        Ok(Self {
            n_classes,
            probs,
            predicted_labels: predicted,
        })
    }

    /// Trusted constructor for softmax outputs produced in this crate.
    pub(crate) fn from_softmax_columns(n_classes: usize, probs: Vec<f64>) -> Self {
        let predicted_labels = probs
            .chunks_exact(n_classes)
            .map(|c| Some(argmax(c)))
            .collect();
        Self {
            n_classes,
            probs,
            predicted_labels,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_steps(&self) -> usize {
        self.predicted_labels.len()
    }

    pub fn column(&self, step: usize) -> &[f64] {
        &self.probs[step * self.n_classes..(step + 1) * self.n_classes]
    }

    #[inline]
    pub fn prob(&self, class: usize, step: usize) -> f64 {
        self.probs[step * self.n_classes + class]
    }

    /// `-log p`, with `p` clamped to [`PROB_FLOOR`].
    #[inline]
    pub fn cost(&self, class: usize, step: usize) -> f64 {
        -libm::log(self.prob(class, step).max(PROB_FLOOR))
    }

    pub fn predicted_labels(&self) -> &[Option<usize>] {
        &self.predicted_labels
    }
}

/// Step → class mapping; dense form `T[t][j] = 1` iff `step_to_label[t] == j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentMatrix {
    pub step_to_label: Vec<usize>,
}

impl AlignmentMatrix {
    pub fn n_steps(&self) -> usize {
        self.step_to_label.len()
    }

    pub fn is_set(&self, step: usize, class: usize) -> bool {
        self.step_to_label.get(step) == Some(&class)
    }

    /// Row-major dense `n_steps × n_classes` 0/1 matrix.
    pub fn to_dense(&self, n_classes: usize) -> Vec<u8> {
        let mut dense = vec![0u8; self.step_to_label.len() * n_classes];
        for (t, &j) in self.step_to_label.iter().enumerate() {
            dense[t * n_classes + j] = 1;
        }
        dense
    }

    /// Checks the bijection constraints: every label of `labels` used exactly
    /// once on the first `|labels|` steps and the end token on the last.
    pub fn is_valid_for(&self, labels: &[usize], end_token: usize) -> bool {
        if self.step_to_label.len() != labels.len() + 1 {
            return false;
        }
        if self.step_to_label.last() != Some(&end_token) {
            return false;
        }
        let head: BTreeSet<usize> = self.step_to_label[..labels.len()].iter().copied().collect();
        let want: BTreeSet<usize> = labels.iter().copied().collect();
        head.len() == labels.len() && head == want
    }
}

/// Truncates to the first `n_targets` columns, or pads with uniform columns.
pub fn shape_predictions(
    raw: &PredictionMatrix,
    n_targets: usize,
) -> Result<PredictionMatrix, AlignmentError> {
    if n_targets == 0 {
        return Err(AlignmentError::ZeroTargets);
    }
    let k = raw.n_steps();
    let m = raw.n_classes;
    if k == n_targets {
        return Ok(raw.clone());
    }
    let mut probs = Vec::with_capacity(m * n_targets);
    let mut predicted = Vec::with_capacity(n_targets);
    let keep = k.min(n_targets);
    probs.extend_from_slice(&raw.probs[..keep * m]);
    predicted.extend_from_slice(&raw.predicted_labels[..keep]);
    for _ in keep..n_targets {
        probs.extend(core::iter::repeat_n(1.0 / m as f64, m));
        predicted.push(None);
    }
    Ok(PredictionMatrix {
        n_classes: m,
        probs,
        predicted_labels: predicted,
    })
}

fn checked_label_set(labels: &[usize], size: usize) -> Result<Vec<usize>, AlignmentError> {
    if labels.is_empty() {
        return Err(AlignmentError::EmptyLabels);
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(AlignmentError::DuplicateLabel(w[0]));
        }
    }
    if let Some(&bad) = sorted.iter().find(|&&l| l >= size) {
        return Err(AlignmentError::LabelOutOfRange { label: bad, size });
    }
    Ok(sorted)
}

/// Sorts `labels` by a fixed criterion and appends the end token.
///
/// Frequency ties fall back to ascending class index. `random_order` shuffles
/// with `rng_seed`, starting from the sorted listing so the result depends on
/// the set and the seed only.
pub fn fixed_order_targets(
    labels: &[usize],
    strategy: OrderingStrategy,
    vocab: &LabelVocabulary,
    rng_seed: Option<u64>,
) -> Result<Vec<usize>, AlignmentError> {
    let mut sorted = checked_label_set(labels, vocab.n_classes())?;
    match strategy {
        OrderingStrategy::FrequentFirst => {
            sorted.sort_by(|&a, &b| vocab.frequency(b).cmp(&vocab.frequency(a)).then(a.cmp(&b)))
        }
        OrderingStrategy::RareFirst => {
            sorted.sort_by(|&a, &b| vocab.frequency(a).cmp(&vocab.frequency(b)).then(a.cmp(&b)))
        }
        OrderingStrategy::DictionaryOrder => {
            sorted.sort_by(|&a, &b| vocab.name(a).cmp(vocab.name(b)).then(a.cmp(&b)))
        }
        OrderingStrategy::RandomOrder => {
            let seed = rng_seed.ok_or(AlignmentError::MissingSeed)?;
            sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        OrderingStrategy::Mla | OrderingStrategy::Pla => {
            return Err(AlignmentError::NeedsPredictions(strategy))
        }
    }
    sorted.push(vocab.end_token());
    Ok(sorted)
}

/// Fixed listing → alignment (step `t` gets `listing[t]`).
pub fn alignment_from_listing(listing: Vec<usize>) -> AlignmentMatrix {
    AlignmentMatrix {
        step_to_label: listing,
    }
}

fn check_shaped(preds: &PredictionMatrix, n_labels: usize, end_token: usize) -> Result<(), AlignmentError> {
    if preds.n_steps() != n_labels + 1 {
        return Err(AlignmentError::StepMismatch {
            expected: n_labels + 1,
            got: preds.n_steps(),
        });
    }
    if end_token >= preds.n_classes {
        return Err(AlignmentError::LabelOutOfRange {
            label: end_token,
            size: preds.n_classes,
        });
    }
    Ok(())
}

/// Minimal loss alignment over the first `|L|` steps; the end token takes the
/// last step.
pub fn align_mla(
    preds: &PredictionMatrix,
    labels: &[usize],
    end_token: usize,
) -> Result<AlignmentMatrix, AlignmentError> {
    let labels = checked_label_set(labels, preds.n_classes)?;
    check_shaped(preds, labels.len(), end_token)?;
    let n = labels.len();
    let steps: Vec<usize> = (0..n).collect();
    let mut step_to_label = vec![end_token; n + 1];
    assign_free(preds, &labels, &steps, &mut step_to_label)?;
    Ok(AlignmentMatrix { step_to_label })
}

/// Predicted label alignment: each ground-truth label that the decoder
/// emitted (argmax) on one of the first `|L|` steps stays at the earliest such
/// step; remaining labels are matched to remaining steps at minimal loss.
pub fn align_pla(
    preds: &PredictionMatrix,
    labels: &[usize],
    end_token: usize,
) -> Result<AlignmentMatrix, AlignmentError> {
    let labels = checked_label_set(labels, preds.n_classes)?;
    check_shaped(preds, labels.len(), end_token)?;
    let n = labels.len();
    let mut step_to_label = vec![end_token; n + 1];
    let mut pinned_label = vec![false; n];
    let mut free_steps = Vec::with_capacity(n);
    for (t, predicted) in preds.predicted_labels[..n].iter().enumerate() {
        let hit = predicted
            .and_then(|l| labels.binary_search(&l).ok())
            .filter(|&k| !pinned_label[k]);
        match hit {
            Some(k) => {
                pinned_label[k] = true;
                step_to_label[t] = labels[k];
            }
            None => free_steps.push(t),
        }
    }
    if !free_steps.is_empty() {
        let free_labels: Vec<usize> = labels
            .iter()
            .zip(&pinned_label)
            .filter(|(_, &p)| !p)
            .map(|(&l, _)| l)
            .collect();
        assign_free(preds, &free_labels, &free_steps, &mut step_to_label)?;
    }
    Ok(AlignmentMatrix { step_to_label })
}

/// Solves labels × steps on `-log p` and writes the result into `out`.
fn assign_free(
    preds: &PredictionMatrix,
    labels: &[usize],
    steps: &[usize],
    out: &mut [usize],
) -> Result<(), AlignmentError> {
    if labels.len() == 1 {
        out[steps[0]] = labels[0];
        return Ok(());
    }
    let entries = labels
        .iter()
        .flat_map(|&l| steps.iter().map(move |&t| preds.cost(l, t)))
        .collect();
    let costs = CostMatrix::new(labels.len(), steps.len(), entries)?;
    let a = solve_assignment(&costs)?;
    for (row, &col) in a.row_to_col.iter().enumerate() {
        out[steps[col]] = labels[row];
    }
    Ok(())
}

/// Cross-entropy of the predictions against `targets`: `-Σ_t log p_t[T(t)]`.
pub fn sequence_loss(
    preds: &PredictionMatrix,
    targets: &AlignmentMatrix,
) -> Result<f64, AlignmentError> {
    if preds.n_steps() != targets.n_steps() {
        return Err(AlignmentError::StepMismatch {
            expected: targets.n_steps(),
            got: preds.n_steps(),
        });
    }
    let mut loss = 0.0;
    for (t, &j) in targets.step_to_label.iter().enumerate() {
        if j >= preds.n_classes {
            return Err(AlignmentError::LabelOutOfRange {
                label: j,
                size: preds.n_classes,
            });
        }
        loss += preds.cost(j, t);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    // Classes: A=0, B=1, C=2, end=3.
    const END: usize = 3;

    fn divergence_fixture() -> PredictionMatrix {
        PredictionMatrix::from_columns(&[
            [0.4, 0.5, 0.05, 0.05],
            [0.01, 0.6, 0.2, 0.19],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    fn vocab() -> LabelVocabulary {
        LabelVocabulary::new(
            ["cat", "apple", "dog"].iter().map(|s| String::from(*s)).collect(),
            vec![100, 500, 100],
        )
        .unwrap()
    }

    #[test]
    fn shaping_truncates_pads_or_keeps() {
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|t| {
                let mut c = vec![0.0; 10];
                c[t] = 1.0;
                c
            })
            .collect();
        let raw = PredictionMatrix::from_columns(&cols).unwrap();
        let cut = shape_predictions(&raw, 3).unwrap();
        assert_eq!(cut.n_steps(), 3);
        assert_eq!(cut.column(2), raw.column(2));
        assert_eq!(shape_predictions(&raw, 5).unwrap(), raw);

        let short = PredictionMatrix::from_columns(&cols[..2]).unwrap();
        let padded = shape_predictions(&short, 4).unwrap();
        for t in 2..4 {
            assert!(padded.column(t).iter().all(|&p| p == 0.1));
            assert!((padded.column(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(padded.predicted_labels()[t], None);
        }
        assert_eq!(shape_predictions(&raw, 0), Err(AlignmentError::ZeroTargets));
    }

    #[test]
    fn fixed_orders() {
        let v = vocab();
        // cat=0 (100), apple=1 (500)
        assert_eq!(fixed_order_targets(&[0, 1], OrderingStrategy::FrequentFirst, &v, None).unwrap(), vec![1, 0, 4]);
        assert_eq!(fixed_order_targets(&[0, 1], OrderingStrategy::RareFirst, &v, None).unwrap(), vec![0, 1, 4]);
        assert_eq!(
            fixed_order_targets(&[0, 1, 2], OrderingStrategy::DictionaryOrder, &v, None).unwrap(),
            vec![1, 0, 2, 4]
        );
        // cat and dog tie on frequency: ascending index.
        assert_eq!(fixed_order_targets(&[2, 0], OrderingStrategy::FrequentFirst, &v, None).unwrap(), vec![0, 2, 4]);
        let r1 = fixed_order_targets(&[0, 1, 2], OrderingStrategy::RandomOrder, &v, Some(9)).unwrap();
        let r2 = fixed_order_targets(&[2, 1, 0], OrderingStrategy::RandomOrder, &v, Some(9)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.last(), Some(&4));
    }

    #[test]
    fn fixed_order_errors() {
        let v = vocab();
        assert_eq!(
            fixed_order_targets(&[0, 7], OrderingStrategy::FrequentFirst, &v, None),
            Err(AlignmentError::LabelOutOfRange { label: 7, size: 3 })
        );
        assert_eq!(
            fixed_order_targets(&[0], OrderingStrategy::Mla, &v, None),
            Err(AlignmentError::NeedsPredictions(OrderingStrategy::Mla))
        );
        assert_eq!(
            fixed_order_targets(&[0], OrderingStrategy::RandomOrder, &v, None),
            Err(AlignmentError::MissingSeed)
        );
        assert_eq!(
            fixed_order_targets(&[], OrderingStrategy::RareFirst, &v, None),
            Err(AlignmentError::EmptyLabels)
        );
    }

    #[test]
    fn mla_and_pla_diverge_on_fixture() {
        let p = divergence_fixture();
        let mla = align_mla(&p, &[1, 0], END).unwrap();
        assert_eq!(mla.step_to_label, vec![0, 1, END]);
        let mla_loss = sequence_loss(&p, &mla).unwrap();
        assert!((mla_loss - (-libm::log(0.4) - libm::log(0.6))).abs() < 1e-12);
        assert!((mla_loss - 1.427).abs() < 1e-3);

        let pla = align_pla(&p, &[0, 1], END).unwrap();
        assert_eq!(pla.step_to_label, vec![1, 0, END]);
        let pla_loss = sequence_loss(&p, &pla).unwrap();
        assert!((pla_loss - 5.298).abs() < 1e-3);
    }

    #[test]
    fn confident_permutation_is_order_invariant() {
        let p = PredictionMatrix::from_columns(&[
            [0.9, 0.05, 0.03, 0.02],
            [0.05, 0.9, 0.03, 0.02],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        for listing in [[0, 1], [1, 0]] {
            let a = align_mla(&p, &listing, END).unwrap();
            assert_eq!(a.step_to_label, vec![0, 1, END]);
            let loss = sequence_loss(&p, &a).unwrap();
            assert!((loss + 2.0 * libm::log(0.9)).abs() < 1e-12);
            assert_eq!(align_pla(&p, &listing, END).unwrap(), a);
        }
    }

    #[test]
    fn single_label_goes_to_first_step() {
        let p = PredictionMatrix::from_columns(&[[0.1, 0.1, 0.7, 0.1], [0.25, 0.25, 0.25, 0.25]]).unwrap();
        assert_eq!(align_mla(&p, &[0], END).unwrap().step_to_label, vec![0, END]);
        assert_eq!(align_pla(&p, &[0], END).unwrap().step_to_label, vec![0, END]);
    }

    #[test]
    fn pla_without_hits_matches_mla() {
        // Argmax is class C everywhere, not in L.
        let p = PredictionMatrix::from_columns(&[
            [0.3, 0.1, 0.5, 0.1],
            [0.1, 0.3, 0.5, 0.1],
            [0.2, 0.2, 0.5, 0.1],
        ])
        .unwrap();
        assert_eq!(align_pla(&p, &[0, 1], END).unwrap(), align_mla(&p, &[0, 1], END).unwrap());
    }

    #[test]
    fn loss_closed_forms() {
        let uniform = PredictionMatrix::from_columns(&vec![vec![0.1; 10]; 3]).unwrap();
        let t = AlignmentMatrix { step_to_label: vec![0, 1, 2] };
        assert!((sequence_loss(&uniform, &t).unwrap() - 3.0 * libm::log(10.0)).abs() < 1e-12);

        let onehot = PredictionMatrix::from_columns(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]).unwrap();
        let t = AlignmentMatrix { step_to_label: vec![0, 3] };
        assert!(sequence_loss(&onehot, &t).unwrap().abs() < 1e-11);
        // Zero probability is clamped, not infinite.
        let t = AlignmentMatrix { step_to_label: vec![1, 3] };
        assert!((sequence_loss(&onehot, &t).unwrap() + libm::log(PROB_FLOOR)).abs() < 1e-9);

        let short = AlignmentMatrix { step_to_label: vec![0] };
        assert!(matches!(sequence_loss(&onehot, &short), Err(AlignmentError::StepMismatch { .. })));
    }

    #[test]
    fn rejects_unshaped_or_bad_inputs() {
        let p = divergence_fixture();
        assert_eq!(
            align_mla(&p, &[0], END),
            Err(AlignmentError::StepMismatch { expected: 2, got: 3 })
        );
        assert_eq!(align_pla(&p, &[], END), Err(AlignmentError::EmptyLabels));
        assert_eq!(align_mla(&p, &[0, 0], END), Err(AlignmentError::DuplicateLabel(0)));
        assert!(PredictionMatrix::from_columns(&[[0.5, 0.6]]).is_err());
        assert!(PredictionMatrix::from_columns(&[[f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn dense_form_and_validity() {
        let a = AlignmentMatrix { step_to_label: vec![1, 0, END] };
        assert!(a.is_valid_for(&[0, 1], END));
        assert!(!a.is_valid_for(&[0, 2], END));
        let d = a.to_dense(4);
        assert_eq!(d.iter().map(|&x| x as usize).sum::<usize>(), 3);
        assert_eq!(d[1], 1);
        assert_eq!(d[4], 1);
        assert_eq!(d[8 + END], 1);
        assert_eq!("pla".parse::<OrderingStrategy>(), Ok(OrderingStrategy::Pla));
        assert!("lifo".parse::<OrderingStrategy>().is_err());
    }
}
