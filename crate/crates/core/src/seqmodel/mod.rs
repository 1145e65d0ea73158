//! LSTM label decoder with optional additive attention.
//!
//! The initial hidden state is a linear projection of the global feature and
//! the cell state starts at zero. At every step the previous label's
//! embedding, concatenated with an attention context over the spatial grid,
//! drives one LSTM step; the output layer and a softmax give the step's class
//! distribution. With attention off the context slot is all zeros.
//!
//! Gradients are computed by hand. The alignment of targets to steps and the
//! fed-back labels are discrete and are held constant in the backward pass.

mod backward;
mod params;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::alignment::{
    align_mla, align_pla, alignment_from_listing, fixed_order_targets, sequence_loss,
    shape_predictions, AlignmentError, AlignmentMatrix, OrderingStrategy, PredictionMatrix,
};
use crate::data::{LabelVocabulary, SampleRecord};
use crate::linalg::{argmax, dot, matvec, matvec_acc, sigmoid, softmax};

pub use backward::backward;
pub use params::{ModelDims, ModelParameters, INIT_SCALE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("class index {class} outside output alphabet of {size}")]
    InvalidClass { class: usize, size: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
}

/// Recurrent state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeOptions {
    pub use_attention: bool,
    /// Feed target labels instead of the decoder's own argmax.
    pub teacher_forcing: bool,
    /// Shuffle seed for `random_order` targets.
    pub order_seed: Option<u64>,
}

/// Loss, gradients and the intermediate products of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub loss: f64,
    pub grads: ModelParameters,
    pub predictions: PredictionMatrix,
    pub targets: AlignmentMatrix,
    /// Tokens fed at each step, starting with the start token.
    pub inputs: Vec<usize>,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::Dimension { what, expected, got })
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// `h = enc_w · feature + enc_b`, `c = 0`, `t = 0`.
pub fn init_state(feature: &[f64], params: &ModelParameters) -> Result<DecoderState, ModelError> {
    let d = params.dims;
    check_len("feature", d.feature, feature.len())?;
    let mut h = params.enc_b.clone();
    matvec_acc(&params.enc_w, feature, &mut h);
    Ok(DecoderState {
        h,
        c: vec![0.0; d.hidden],
        t: 0,
    })
}

/// Gate activations `[f, i, o, g]` (each `hidden` long) for input `x`.
fn gate_activations(x: &[f64], h_prev: &[f64], params: &ModelParameters) -> Vec<f64> {
    let hsz = params.dims.hidden;
    let mut z = params.gate_b.clone();
    matvec_acc(&params.gate_w, x, &mut z);
    matvec_acc(&params.gate_u, h_prev, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if k < 3 * hsz { sigmoid(*v) } else { libm::tanh(*v) };
    }
    z
}

/// One LSTM step:
/// `f, i, o = σ(W x + U h + b)`, `c' = f⊙c + i⊙tanh(W_c x + U_c h + b_c)`,
/// `h' = o⊙tanh(c')`.
pub fn lstm_step(
    x: &[f64],
    state: &DecoderState,
    params: &ModelParameters,
) -> Result<DecoderState, ModelError> {
    let d = params.dims;
    check_len("lstm input", d.input(), x.len())?;
    check_len("hidden state", d.hidden, state.h.len())?;
    check_len("cell state", d.hidden, state.c.len())?;
    let gates = gate_activations(x, &state.h, params);
    let (c, _, h) = combine_gates(&gates, &state.c);
    if !all_finite(&c) || !all_finite(&h) {
        return Err(ModelError::NonFinite("lstm state"));
    }
    Ok(DecoderState { h, c, t: state.t + 1 })
}

/// Returns `(c', tanh(c'), h')`.
fn combine_gates(gates: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hsz = c_prev.len();
    let (f, rest) = gates.split_at(hsz);
    let (i, rest) = rest.split_at(hsz);
    let (o, g) = rest.split_at(hsz);
    let c: Vec<f64> = (0..hsz).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tc: Vec<f64> = c.iter().map(|&v| libm::tanh(v)).collect();
    let h = (0..hsz).map(|k| o[k] * tc[k]).collect();
    (c, tc, h)
}

/// Attention keys `att_w · s_j + att_b` for every cell, computed once per sample.
fn attention_keys(sample: &SampleRecord, params: &ModelParameters) -> Vec<Vec<f64>> {
    let a = params.dims.attention;
    sample
        .spatial_features
        .iter()
        .map(|cell| {
            let mut k = matvec(&params.att_w, a, cell);
            k.iter_mut().zip(&params.att_b).for_each(|(x, b)| *x += b);
            k
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// `tanh(key_j + att_u · h_prev)` per cell.
    pub act: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

/// Additive attention: `e_j = v · tanh(key_j + U h)`, `α = softmax(e)`,
/// context `Σ α_j s_j`.
fn attend(
    keys: &[Vec<f64>],
    h_prev: &[f64],
    sample: &SampleRecord,
    params: &ModelParameters,
) -> (Vec<f64>, AttentionCache) {
    let a = params.dims.attention;
    let query = matvec(&params.att_u, a, h_prev);
    let act: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| k.iter().zip(&query).map(|(x, q)| libm::tanh(x + q)).collect())
        .collect();
    let scores: Vec<f64> = act.iter().map(|z| dot(z, &params.att_v)).collect();
    let alpha = softmax(&scores);
    let mut ctx = vec![0.0; params.dims.feature];
    for (cell, &w) in sample.spatial_features.iter().zip(&alpha) {
        ctx.iter_mut().zip(cell).for_each(|(c, s)| *c += w * s);
    }
    (ctx, AttentionCache { act, alpha })
}

/// Everything the backward pass needs from one step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub token: usize,
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub probs: Vec<f64>,
    pub attention: Option<AttentionCache>,
}

/// Forward record of a whole decode.
#[derive(Debug, Clone)]
pub struct Trace {
    pub(crate) steps: Vec<StepCache>,
}

impl Trace {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Tokens fed at each step.
    pub fn inputs(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.token).collect()
    }

    pub fn predictions(&self) -> PredictionMatrix {
        let m = self.steps.first().map_or(0, |s| s.probs.len());
        let probs = self.steps.iter().flat_map(|s| s.probs.iter().copied()).collect();
        PredictionMatrix::from_softmax_columns(m, probs)
    }
}

fn cached_step(
    token: usize,
    state: &DecoderState,
    keys: Option<&[Vec<f64>]>,
    sample: &SampleRecord,
    params: &ModelParameters,
) -> Result<(StepCache, DecoderState), ModelError> {
    let d = params.dims;
    if token >= d.vocab_size() {
        return Err(ModelError::InvalidClass {
            class: token,
            size: d.vocab_size(),
        });
    }
    let mut x = Vec::with_capacity(d.input());
    x.extend_from_slice(&params.embedding[token * d.embed..(token + 1) * d.embed]);
    let attention = match keys {
        Some(keys) => {
            let (ctx, cache) = attend(keys, &state.h, sample, params);
            x.extend_from_slice(&ctx);
            Some(cache)
        }
        None => {
            x.resize(d.input(), 0.0);
            None
        }
    };
    let gates = gate_activations(&x, &state.h, params);
    let (c, tanh_c, h) = combine_gates(&gates, &state.c);
    let mut logits = params.out_b.clone();
    matvec_acc(&params.out_w, &h, &mut logits);
    let probs = softmax(&logits);
    if !all_finite(&h) || !all_finite(&c) || !all_finite(&probs) {
        return Err(ModelError::NonFinite("decode step"));
    }
    let cache = StepCache {
        token,
        x,
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        tanh_c,
        probs,
        attention,
    };
    Ok((cache, DecoderState { h, c, t: state.t + 1 }))
}

fn check_sample(
    sample: &SampleRecord,
    params: &ModelParameters,
    use_attention: bool,
) -> Result<(), ModelError> {
    check_len("global feature", params.dims.feature, sample.global_feature.len())?;
    if use_attention {
        if sample.spatial_features.is_empty() {
            return Err(ModelError::InvalidSample("attention needs spatial cells".into()));
        }
        for cell in &sample.spatial_features {
            check_len("spatial cell", params.dims.feature, cell.len())?;
        }
    }
    Ok(())
}

/// Embeds `prev_label`, optionally attends, runs the LSTM and returns the
/// step's class distribution with the next state.
pub fn decode_step(
    prev_label: usize,
    state: &DecoderState,
    sample: &SampleRecord,
    params: &ModelParameters,
    use_attention: bool,
) -> Result<(Vec<f64>, DecoderState), ModelError> {
    check_sample(sample, params, use_attention)?;
    let keys = use_attention.then(|| attention_keys(sample, params));
    let (cache, next) = cached_step(prev_label, state, keys.as_deref(), sample, params)?;
    Ok((cache.probs, next))
}

/// Which tokens feed the decoder.
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    /// Start token, then the decoder's own argmax.
    FeedBack,
    /// Exactly these tokens, one per step.
    Given(&'a [usize]),
}

/// Runs `n_steps` decoder steps and records them.
pub fn forward(
    sample: &SampleRecord,
    params: &ModelParameters,
    inputs: Inputs<'_>,
    n_steps: usize,
    use_attention: bool,
) -> Result<Trace, ModelError> {
    check_sample(sample, params, use_attention)?;
    if let Inputs::Given(tokens) = inputs {
        check_len("input tokens", n_steps, tokens.len())?;
    }
    let keys = use_attention.then(|| attention_keys(sample, params));
    let mut state = init_state(&sample.global_feature, params)?;
    let mut steps = Vec::with_capacity(n_steps);
    let mut token = params.dims.start_token();
    for t in 0..n_steps {
        if let Inputs::Given(tokens) = inputs {
            token = tokens[t];
        }
        let (cache, next) = cached_step(token, &state, keys.as_deref(), sample, params)?;
        token = argmax(&cache.probs);
        steps.push(cache);
        state = next;
    }
    Ok(Trace { steps })
}

/// Greedy argmax decoding until the end token or `max_steps`.
///
/// The returned sequence excludes start and end tokens; a predicted start
/// token is fed back but not emitted.
pub fn greedy_decode(
    sample: &SampleRecord,
    params: &ModelParameters,
    max_steps: usize,
    use_attention: bool,
) -> Result<Vec<usize>, ModelError> {
    check_sample(sample, params, use_attention)?;
    let d = params.dims;
    let keys = use_attention.then(|| attention_keys(sample, params));
    let mut state = init_state(&sample.global_feature, params)?;
    let mut token = d.start_token();
    let mut out = Vec::new();
    for _ in 0..max_steps {
        let (cache, next) = cached_step(token, &state, keys.as_deref(), sample, params)?;
        state = next;
        token = argmax(&cache.probs);
        if token == d.end_token() {
            break;
        }
        if token != d.start_token() {
            out.push(token);
        }
    }
    Ok(out)
}

/// Targets for `labels` under `strategy`; orderless strategies align against
/// `preds`.
pub fn build_targets(
    preds: &PredictionMatrix,
    labels: &[usize],
    vocab: &LabelVocabulary,
    strategy: OrderingStrategy,
    order_seed: Option<u64>,
) -> Result<AlignmentMatrix, AlignmentError> {
    let shaped = shape_predictions(preds, labels.len() + 1)?;
    match strategy {
        OrderingStrategy::Mla => align_mla(&shaped, labels, vocab.end_token()),
        OrderingStrategy::Pla => align_pla(&shaped, labels, vocab.end_token()),
        fixed => fixed_order_targets(labels, fixed, vocab, order_seed).map(alignment_from_listing),
    }
}

/// Decodes `|L| + 1` steps, builds targets per `strategy` and returns the
/// aligned loss with its gradient.
///
/// With teacher forcing, fixed orders feed their own listing; the orderless
/// strategies first align a free-running decode and then feed the aligned
/// labels.
pub fn forward_backward(
    sample: &SampleRecord,
    params: &ModelParameters,
    vocab: &LabelVocabulary,
    strategy: OrderingStrategy,
    opts: DecodeOptions,
) -> Result<StepResult, ModelError> {
    sample
        .validate(params.dims.n_classes)
        .map_err(ModelError::InvalidSample)?;
    let n = sample.labels.len() + 1;
    let (trace, targets) = if opts.teacher_forcing {
        let targets = if strategy.is_orderless() {
            let free = forward(sample, params, Inputs::FeedBack, n, opts.use_attention)?;
            build_targets(&free.predictions(), &sample.labels, vocab, strategy, opts.order_seed)?
        } else {
            build_targets_fixed(sample, vocab, strategy, opts.order_seed)?
        };
        let tokens = teacher_tokens(&targets, params.dims.start_token());
        let trace = forward(sample, params, Inputs::Given(&tokens), n, opts.use_attention)?;
        (trace, targets)
    } else {
        let trace = forward(sample, params, Inputs::FeedBack, n, opts.use_attention)?;
        let targets =
            build_targets(&trace.predictions(), &sample.labels, vocab, strategy, opts.order_seed)?;
        (trace, targets)
    };
    let predictions = trace.predictions();
    let loss = sequence_loss(&predictions, &targets)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    let grads = backward(&trace, sample, params, &targets);
    Ok(StepResult {
        loss,
        grads,
        inputs: trace.inputs(),
        predictions,
        targets,
    })
}

fn build_targets_fixed(
    sample: &SampleRecord,
    vocab: &LabelVocabulary,
    strategy: OrderingStrategy,
    order_seed: Option<u64>,
) -> Result<AlignmentMatrix, AlignmentError> {
    fixed_order_targets(&sample.labels, strategy, vocab, order_seed).map(alignment_from_listing)
}

/// Start token followed by all but the last target.
fn teacher_tokens(targets: &AlignmentMatrix, start: usize) -> Vec<usize> {
    let n = targets.n_steps();
    core::iter::once(start)
        .chain(targets.step_to_label[..n - 1].iter().copied())
        .collect()
}

/// Loss of a decode with fixed input tokens against fixed targets. This is
/// the function whose gradient [`forward_backward`] returns.
pub fn path_loss(
    sample: &SampleRecord,
    params: &ModelParameters,
    inputs: &[usize],
    targets: &AlignmentMatrix,
    use_attention: bool,
) -> Result<f64, ModelError> {
    let trace = forward(sample, params, Inputs::Given(inputs), inputs.len(), use_attention)?;
    Ok(sequence_loss(&trace.predictions(), targets)?)
}
