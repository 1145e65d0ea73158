//! Gradient-descent optimizers over [`ModelParameters`].

use alloc::vec;
use alloc::vec::Vec;

use crate::seqmodel::ModelParameters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer with its running state, one moment buffer per parameter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Self {
        let second = match kind {
            OptimizerKind::Adam { .. } => vec![0.0; n_params],
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self {
            kind,
            learning_rate,
            first: vec![0.0; n_params],
            second,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ModelParameters, grads: &ModelParameters) {
        self.steps += 1;
        let lr = self.learning_rate;
        let mut offset = 0;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
                    let vel = &mut self.first[offset..offset + p.len()];
                    for ((w, &gw), v) in p.iter_mut().zip(g).zip(vel.iter_mut()) {
                        *v = momentum * *v + gw;
                        *w -= lr * *v;
                    }
                    offset += p.len();
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as f64;
                let c1 = 1.0 - libm::pow(beta1, t);
                let c2 = 1.0 - libm::pow(beta2, t);
                for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
                    let n = p.len();
                    let m1 = &mut self.first[offset..offset + n];
                    let m2 = &mut self.second[offset..offset + n];
                    for (((w, &gw), a), b) in p.iter_mut().zip(g).zip(m1.iter_mut()).zip(m2.iter_mut()) {
                        *a = beta1 * *a + (1.0 - beta1) * gw;
                        *b = beta2 * *b + (1.0 - beta2) * gw * gw;
                        let mhat = *a / c1;
                        let vhat = *b / c2;
                        *w -= lr * mhat / (libm::sqrt(vhat) + eps);
                    }
                    offset += n;
                }
            }
        }
    }
}
