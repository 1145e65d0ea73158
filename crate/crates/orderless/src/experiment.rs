//! Side-by-side training of several ordering strategies on one dataset.

use std::path::PathBuf;
use std::thread;

use orderless_core::metrics::{evaluate, EvaluationBatch, F1Mean, MetricsReport};
use orderless_core::training::{predict_all, train_with, Clock, NoClock};
use orderless_core::{GeneratorConfig, LabelVocabulary, ModelParameters, OrderingStrategy, SampleRecord, TrainConfig, TrainLog};

use crate::bench::InstantClock;
use crate::CliError;

/// Window of the moving average behind `final_loss`.
pub const SMOOTHING_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub strategies: Vec<OrderingStrategy>,
    /// Shared by every run; `strategy` is overwritten per run.
    pub train: TrainConfig,
    pub out: PathBuf,
    pub f1_mean: F1Mean,
    /// Record alignment wall time. Off gives byte-identical outputs.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub strategy: OrderingStrategy,
    /// Greedy decodes of the validation split (the whole set if none is held out).
    pub report: MetricsReport,
    pub final_loss: f64,
    pub align_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub row: CompareRow,
    pub params: ModelParameters,
    pub log: TrainLog,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.strategies.is_empty() {
            return Err(CliError::Validation("at least one strategy is required".into()));
        }
        let mut seen = self.strategies.clone();
        seen.sort_by_key(|s| s.name());
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Validation("strategies must be distinct".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Trains and evaluates one strategy.
pub fn run_strategy(
    dataset: &[SampleRecord],
    vocab: &LabelVocabulary,
    config: &TrainConfig,
    f1_mean: F1Mean,
    clock: &dyn Clock,
) -> Result<StrategyRun, CliError> {
    let (params, log) = train_with(dataset, vocab, config, None, clock)?;
    let eval_idx: Vec<usize> = if log.validation_indices.is_empty() {
        (0..dataset.len()).collect()
    } else {
        log.validation_indices.clone()
    };
    let subset: Vec<SampleRecord> = eval_idx.iter().map(|&i| dataset[i].clone()).collect();
    let report = evaluate_params(&subset, vocab, &params, config, f1_mean)?;
    let align_ms = (log.times.align_ns > 0).then(|| log.times.mean_ms(log.times.align_ns));
    Ok(StrategyRun {
        row: CompareRow {
            strategy: config.strategy,
            report,
            final_loss: log.smoothed_final_loss(SMOOTHING_WINDOW),
            align_ms,
        },
        params,
        log,
    })
}

/// Greedy-decodes `dataset` and scores it.
pub fn evaluate_params(
    dataset: &[SampleRecord],
    vocab: &LabelVocabulary,
    params: &ModelParameters,
    config: &TrainConfig,
    f1_mean: F1Mean,
) -> Result<MetricsReport, CliError> {
    let preds = predict_all(dataset, params, config.max_decode_steps, config.use_attention)?;
    let gt = dataset.iter().map(|s| s.labels.clone()).collect();
    let batch = EvaluationBatch::new(vocab.n_classes(), gt, preds).map_err(|e| CliError::Runtime(e.to_string()))?;
    evaluate(&batch, f1_mean).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs every strategy of `spec` on its own thread, with identical seeds and
/// budgets. Results come back in `spec.strategies` order.
pub fn run_compare(
    dataset: &[SampleRecord],
    vocab: &LabelVocabulary,
    spec: &ExperimentSpec,
) -> Result<Vec<StrategyRun>, CliError> {
    spec.validate()?;
    thread::scope(|scope| {
        let handles: Vec<_> = spec
            .strategies
            .iter()
            .map(|&strategy| {
                let config = TrainConfig { strategy, ..spec.train.clone() };
                scope.spawn(move || {
                    if spec.timing {
                        run_strategy(dataset, vocab, &config, spec.f1_mean, &InstantClock::new())
                    } else {
                        run_strategy(dataset, vocab, &config, spec.f1_mean, &NoClock)
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Runtime("training thread panicked".into()))))
            .collect()
    })
}

/// The reference comparison: default generator (20 classes, 5000 samples,
/// seed 42) and all six strategies with the default training budget.
pub fn reference_spec() -> (GeneratorConfig, ExperimentSpec) {
    let spec = ExperimentSpec {
        strategies: OrderingStrategy::ALL.to_vec(),
        train: TrainConfig::default(),
        out: PathBuf::from("compare"),
        f1_mean: F1Mean::Geometric,
        timing: true,
    };
    (GeneratorConfig::default(), spec)
}
