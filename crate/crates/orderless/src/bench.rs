//! Wall-clock timing of the per-sample training phases.

use std::hint::black_box;
use std::time::Instant;

use orderless_core::seqmodel::{backward, forward, Inputs};
use orderless_core::training::Clock;
use orderless_core::{align_mla, align_pla, shape_predictions, LabelVocabulary, ModelError, ModelParameters, SampleRecord};

/// `Clock` backed by `Instant`, counting from construction.
#[derive(Debug, Clone, Copy)]
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for InstantClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for InstantClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Mean per-sample time of each phase, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub samples: usize,
    pub repeats: usize,
    pub forward_ms: f64,
    pub mla_ms: f64,
    pub pla_ms: f64,
    pub backward_ms: f64,
    /// Samples on which PLA pinned every label and skipped the solver.
    pub fully_pinned: usize,
}

/// Times forward, MLA, PLA and backward over `dataset`.
///
/// Each phase is timed as one pass over the whole dataset; the pass is run
/// `repeats` times and the fastest total is divided by the sample count.
/// Backward uses the PLA targets.
pub fn benchmark_alignment(
    dataset: &[SampleRecord],
    params: &ModelParameters,
    vocab: &LabelVocabulary,
    use_attention: bool,
    repeats: usize,
) -> Result<BenchReport, ModelError> {
    let end = vocab.end_token();
    let traces = dataset
        .iter()
        .map(|s| forward(s, params, Inputs::FeedBack, s.labels.len() + 1, use_attention))
        .collect::<Result<Vec<_>, _>>()?;
    let preds = traces
        .iter()
        .zip(dataset)
        .map(|(t, s)| shape_predictions(&t.predictions(), s.labels.len() + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let pla_targets = preds
        .iter()
        .zip(dataset)
        .map(|(p, s)| align_pla(p, &s.labels, end))
        .collect::<Result<Vec<_>, _>>()?;
    let fully_pinned = preds
        .iter()
        .zip(dataset)
        .filter(|(p, s)| {
            let mut hit: Vec<usize> = p.predicted_labels()[..s.labels.len()].iter().flatten().copied().collect();
            hit.sort_unstable();
            hit.dedup();
            let mut want = s.labels.clone();
            want.sort_unstable();
            hit == want
        })
        .count();

    let mut best = [u128::MAX; 4];
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        for s in dataset {
            black_box(forward(s, params, Inputs::FeedBack, s.labels.len() + 1, use_attention)?);
        }
        best[0] = best[0].min(t.elapsed().as_nanos());

        let t = Instant::now();
        for (p, s) in preds.iter().zip(dataset) {
            black_box(align_mla(black_box(p), &s.labels, end)?);
        }
        best[1] = best[1].min(t.elapsed().as_nanos());

        let t = Instant::now();
        for (p, s) in preds.iter().zip(dataset) {
            black_box(align_pla(black_box(p), &s.labels, end)?);
        }
        best[2] = best[2].min(t.elapsed().as_nanos());

        let t = Instant::now();
        for ((trace, s), targets) in traces.iter().zip(dataset).zip(&pla_targets) {
            black_box(backward(trace, s, params, targets));
        }
        best[3] = best[3].min(t.elapsed().as_nanos());
    }
    let n = dataset.len().max(1) as f64;
    let ms = |ns: u128| ns as f64 / n / 1e6;
    Ok(BenchReport {
        samples: dataset.len(),
        repeats: repeats.max(1),
        forward_ms: ms(best[0]),
        mla_ms: ms(best[1]),
        pla_ms: ms(best[2]),
        backward_ms: ms(best[3]),
        fully_pinned,
    })
}
