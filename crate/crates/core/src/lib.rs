//! Orderless training losses for recurrent multi-label prediction.
//!
//! The crate is `no_std` with `alloc`. It holds everything that is pure
//! computation: the assignment solver, target alignment (fixed orders plus
//! minimal-loss and predicted-label alignment), an LSTM decoder with
//! hand-written backpropagation, the optimizers and training loop, the
//! synthetic data generator, and the evaluation metrics. File formats,
//! timing and the command line live in the `orderless` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod alignment;
pub mod assignment;
pub mod data;
mod linalg;
pub mod metrics;
pub mod optim;
pub mod seqmodel;
pub mod training;

pub use alignment::{
    align_mla, align_pla, fixed_order_targets, sequence_loss, shape_predictions, AlignmentError,
    AlignmentMatrix, OrderingStrategy, PredictionMatrix,
};
pub use assignment::{
    brute_force_assignment, solve_assignment, Assignment, AssignmentError, CostMatrix,
};
pub use data::{generate, DataError, GeneratorConfig, LabelVocabulary, SampleRecord};
pub use metrics::{EvaluationBatch, F1Mean, MetricsError, MetricsReport};
pub use optim::{Optimizer, OptimizerKind};
pub use seqmodel::{
    DecodeOptions, DecoderState, ModelDims, ModelError, ModelParameters, StepResult,
};
pub use training::{train, TrainConfig, TrainError, TrainLog};
