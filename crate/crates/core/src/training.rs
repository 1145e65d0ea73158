//! Mini-batch training.
//!
//! Per-sample gradients are summed in batch order and divided by the batch
//! size, so a run is a pure function of the dataset and config. Ten percent
//! of the data (by seed) is held out and decoded greedily after every epoch.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alignment::{sequence_loss, OrderingStrategy};
use crate::data::{LabelVocabulary, SampleRecord};
use crate::metrics::{evaluate, EvaluationBatch, F1Mean, MetricsReport};
use crate::optim::{Optimizer, OptimizerKind};
use crate::seqmodel::{
    backward, build_targets, forward, forward_backward, greedy_decode, DecodeOptions, Inputs,
    ModelDims, ModelError, ModelParameters, INIT_SCALE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("sample {index}: {source}")]
    Model {
        index: usize,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: OrderingStrategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub use_attention: bool,
    pub teacher_forcing: bool,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
    pub embed: usize,
    pub attention_dim: usize,
    pub init_scale: f64,
    /// Fraction of samples held out for per-epoch validation.
    pub validation_fraction: f64,
    /// Decode bound during validation.
    pub max_decode_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: OrderingStrategy::Pla,
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.005,
            seed: 42,
            use_attention: false,
            teacher_forcing: false,
            optimizer: OptimizerKind::adam(),
            hidden: 32,
            embed: 16,
            attention_dim: 16,
            init_scale: INIT_SCALE,
            validation_fraction: 0.1,
            max_decode_steps: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        // Zero is allowed: a frozen run is a useful baseline.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if self.hidden == 0 || self.embed == 0 || self.attention_dim == 0 {
            return bad("model dimensions must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            ));
        }
        if self.max_decode_steps == 0 {
            return bad("max_decode_steps must be >= 1".into());
        }
        Ok(())
    }

    pub fn dims(&self, n_classes: usize, feature: usize) -> ModelDims {
        ModelDims {
            n_classes,
            hidden: self.hidden,
            embed: self.embed,
            feature,
            attention: self.attention_dim,
        }
    }

    fn decode_options(&self, order_seed: Option<u64>) -> DecodeOptions {
        DecodeOptions {
            use_attention: self.use_attention,
            teacher_forcing: self.teacher_forcing,
            order_seed,
        }
    }
}

/// Monotonic nanosecond source used to time the phases of a training step.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Clock that always reads zero; timings stay empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

/// Summed phase durations over `samples` training steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseTimes {
    pub samples: u64,
    pub forward_ns: u64,
    pub align_ns: u64,
    pub backward_ns: u64,
}

impl PhaseTimes {
    pub fn mean_ms(&self, total_ns: u64) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            total_ns as f64 / self.samples as f64 / 1e6
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` without a validation split.
    pub validation: Option<ValidationMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationMetrics {
    pub loss: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub strategy: OrderingStrategy,
    /// Mean batch loss per optimizer step.
    pub iteration_losses: Vec<f64>,
    pub epochs: Vec<EpochMetrics>,
    pub times: PhaseTimes,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

impl TrainLog {
    /// Mean of the last `window` iteration losses.
    pub fn smoothed_final_loss(&self, window: usize) -> f64 {
        let n = self.iteration_losses.len();
        let w = window.min(n).max(1);
        self.iteration_losses[n.saturating_sub(w)..].iter().sum::<f64>() / w as f64
    }

    /// Moving average over non-overlapping windows of `window` iterations.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        self.iteration_losses
            .chunks(window.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// SplitMix64 finalizer, used to derive independent per-step seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic train/validation split.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, 0)));
    let n_val = (n as f64 * fraction) as usize;
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Trains from a seeded random initialization.
pub fn train(
    dataset: &[SampleRecord],
    vocab: &LabelVocabulary,
    config: &TrainConfig,
) -> Result<(ModelParameters, TrainLog), TrainError> {
    train_with(dataset, vocab, config, None, &NoClock)
}

/// Trains from `init` (or a seeded initialization), timing each phase with `clock`.
pub fn train_with(
    dataset: &[SampleRecord],
    vocab: &LabelVocabulary,
    config: &TrainConfig,
    init: Option<ModelParameters>,
    clock: &dyn Clock,
) -> Result<(ModelParameters, TrainLog), TrainError> {
    config.validate()?;
    let first = dataset.first().ok_or(TrainError::EmptyDataset)?;
    let dims = config.dims(vocab.n_classes(), first.global_feature.len());
    let mut params = match init {
        Some(p) if p.dims == dims => p,
        Some(p) => {
            return Err(TrainError::InvalidConfig(format!(
                "initial parameters {:?} do not match {:?}",
                p.dims, dims
            )))
        }
        None => ModelParameters::random(dims, config.init_scale, config.seed),
    };

    let (mut train_idx, val_idx) =
        split_indices(dataset.len(), config.validation_fraction, config.seed);
    if train_idx.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut log = TrainLog {
        strategy: config.strategy,
        iteration_losses: Vec::new(),
        epochs: Vec::with_capacity(config.epochs),
        times: PhaseTimes::default(),
        train_indices: train_idx.clone(),
        validation_indices: val_idx.clone(),
    };
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, dims.n_params());
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 2, 0));

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let iteration = log.iteration_losses.len();
            let (loss, grads) =
                batch_step(dataset, batch, &params, vocab, config, iteration, clock, &mut log.times)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { iteration });
            }
            optimizer.step(&mut params, &grads);
            log.iteration_losses.push(loss);
            epoch_loss += loss * batch.len() as f64;
        }
        let validation = if val_idx.is_empty() {
            None
        } else {
            Some(validate(dataset, &val_idx, &params, vocab, config, epoch)?)
        };
        log.epochs.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / train_idx.len() as f64,
            validation,
        });
    }
    Ok((params, log))
}

#[allow(clippy::too_many_arguments)]
fn batch_step(
    dataset: &[SampleRecord],
    batch: &[usize],
    params: &ModelParameters,
    vocab: &LabelVocabulary,
    config: &TrainConfig,
    iteration: usize,
    clock: &dyn Clock,
    times: &mut PhaseTimes,
) -> Result<(f64, ModelParameters), TrainError> {
    let mut sum = ModelParameters::zeros(params.dims);
    let mut loss = 0.0;
    for (pos, &index) in batch.iter().enumerate() {
        let sample = &dataset[index];
        let seed = mix_seed(config.seed, iteration as u64 + 3, pos as u64);
        let opts = config.decode_options(Some(seed));
        let model_err = |source| TrainError::Model { index, source };
        if config.teacher_forcing {
            let r = forward_backward(sample, params, vocab, config.strategy, opts)
                .map_err(model_err)?;
            loss += r.loss;
            sum.add_scaled(&r.grads, 1.0);
            times.samples += 1;
            continue;
        }
        // Same computation as forward_backward, split so each phase is timed.
        sample.validate(vocab.n_classes()).map_err(|e| model_err(ModelError::InvalidSample(e)))?;
        let n = sample.labels.len() + 1;
        let t0 = clock.now_ns();
        let trace = forward(sample, params, Inputs::FeedBack, n, config.use_attention)
            .map_err(model_err)?;
        let preds = trace.predictions();
        let t1 = clock.now_ns();
        let targets = build_targets(&preds, &sample.labels, vocab, config.strategy, Some(seed))
            .map_err(|e| model_err(e.into()))?;
        let t2 = clock.now_ns();
        let grads = backward(&trace, sample, params, &targets);
        let t3 = clock.now_ns();
        loss += sequence_loss(&preds, &targets).map_err(|e| model_err(e.into()))?;
        sum.add_scaled(&grads, 1.0);
        times.samples += 1;
        times.forward_ns += t1 - t0;
        times.align_ns += t2 - t1;
        times.backward_ns += t3 - t2;
    }
    let inv = 1.0 / batch.len() as f64;
    sum.scale(inv);
    Ok((loss * inv, sum))
}

fn validate(
    dataset: &[SampleRecord],
    val_idx: &[usize],
    params: &ModelParameters,
    vocab: &LabelVocabulary,
    config: &TrainConfig,
    epoch: usize,
) -> Result<ValidationMetrics, TrainError> {
    let mut loss = 0.0;
    let mut gt = Vec::with_capacity(val_idx.len());
    let mut pred = Vec::with_capacity(val_idx.len());
    for (pos, &index) in val_idx.iter().enumerate() {
        let sample = &dataset[index];
        let model_err = |source| TrainError::Model { index, source };
        let n = sample.labels.len() + 1;
        let trace = forward(sample, params, Inputs::FeedBack, n, config.use_attention)
            .map_err(model_err)?;
        let preds = trace.predictions();
        let seed = mix_seed(config.seed ^ 0x5EED, epoch as u64, pos as u64);
        let targets = build_targets(&preds, &sample.labels, vocab, config.strategy, Some(seed))
            .map_err(|e| model_err(e.into()))?;
        loss += sequence_loss(&preds, &targets).map_err(|e| model_err(e.into()))?;
        gt.push(sample.labels.clone());
        pred.push(
            greedy_decode(sample, params, config.max_decode_steps, config.use_attention)
                .map_err(model_err)?,
        );
    }
    let batch = EvaluationBatch::new(vocab.n_classes(), gt, pred)
        .expect("decoder emits only real classes");
    let report = evaluate(&batch, F1Mean::Geometric).expect("validation split is non-empty");
    Ok(ValidationMetrics {
        loss: loss / val_idx.len() as f64,
        report,
    })
}

/// Greedy predictions for every sample, in order.
pub fn predict_all(
    dataset: &[SampleRecord],
    params: &ModelParameters,
    max_steps: usize,
    use_attention: bool,
) -> Result<Vec<Vec<usize>>, TrainError> {
    dataset
        .iter()
        .enumerate()
        .map(|(index, s)| {
            greedy_decode(s, params, max_steps, use_attention)
                .map_err(|source| TrainError::Model { index, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GeneratorConfig};
    use alloc::vec;

    fn toy(n: usize, seed: u64) -> (LabelVocabulary, Vec<SampleRecord>) {
        generate(&GeneratorConfig {
            n_classes: 4,
            n_samples: n,
            labels_per_sample: (1, 3),
            correlation_pairs: vec![],
            feature_dim: 6,
            grid_size: 2,
            noise_sigma: 0.0,
            seed,
            ..GeneratorConfig::default()
        })
        .unwrap()
    }

    fn small_config(strategy: OrderingStrategy) -> TrainConfig {
        TrainConfig {
            strategy,
            epochs: 3,
            batch_size: 4,
            hidden: 8,
            embed: 4,
            attention_dim: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let (v, d) = toy(8, 1);
        for cfg in [
            TrainConfig { epochs: 0, ..small_config(OrderingStrategy::Mla) },
            TrainConfig { batch_size: 0, ..small_config(OrderingStrategy::Mla) },
            TrainConfig { learning_rate: -1.0, ..small_config(OrderingStrategy::Mla) },
        ] {
            assert!(matches!(train(&d, &v, &cfg), Err(TrainError::InvalidConfig(_))));
        }
        assert_eq!(train(&[], &v, &small_config(OrderingStrategy::Mla)).unwrap_err(), TrainError::EmptyDataset);
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let (v, d) = toy(30, 2);
        for strategy in OrderingStrategy::ALL {
            let cfg = small_config(strategy);
            let a = train(&d, &v, &cfg).unwrap();
            let b = train(&d, &v, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.1.iteration_losses.len(), 3 * 27usize.div_ceil(4));
            assert!(a.1.epochs.iter().all(|e| e.validation.is_some()));
        }
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let (v, d) = toy(8, 3);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 8,
            ..small_config(OrderingStrategy::Pla)
        };
        let (p, log) = train(&d, &v, &cfg).unwrap();
        assert_eq!(p, ModelParameters::random(p.dims, cfg.init_scale, cfg.seed));
        assert!(log.iteration_losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let (v, d) = toy(6, 4);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 6,
            learning_rate: 0.1,
            optimizer: OptimizerKind::Sgd { momentum: 0.0 },
            ..small_config(OrderingStrategy::Mla)
        };
        let (p, _) = train(&d, &v, &cfg).unwrap();
        let p0 = ModelParameters::random(p.dims, cfg.init_scale, cfg.seed);
        let mut mean = ModelParameters::zeros(p.dims);
        for s in &d {
            let r = forward_backward(s, &p0, &v, OrderingStrategy::Mla, DecodeOptions::default()).unwrap();
            mean.add_scaled(&r.grads, 1.0 / 6.0);
        }
        let mut want = p0.clone();
        want.add_scaled(&mean, -0.1);
        for (a, b) in p.to_flat().iter().zip(want.to_flat()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (train, val) = split_indices(100, 0.1, 7);
        assert_eq!(val.len(), 10);
        assert_eq!(train.len(), 90);
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.1, 7), (train, val));
        assert!(split_indices(8, 0.1, 7).1.is_empty());
    }
}
