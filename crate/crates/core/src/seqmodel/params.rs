use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sizes that fix every parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Real classes; the output alphabet adds start and end tokens.
    pub n_classes: usize,
    pub hidden: usize,
    pub embed: usize,
    pub feature: usize,
    /// Width of the additive attention scorer.
    pub attention: usize,
}

impl ModelDims {
    /// Output alphabet size `m`.
    pub fn vocab_size(&self) -> usize {
        self.n_classes + 2
    }

    pub fn start_token(&self) -> usize {
        self.n_classes
    }

    pub fn end_token(&self) -> usize {
        self.n_classes + 1
    }

    /// LSTM input width: embedding concatenated with the attention context.
    pub fn input(&self) -> usize {
        self.embed + self.feature
    }

    /// `(name, rows, cols)` for every block, in checkpoint order.
    pub fn block_shapes(&self) -> [(&'static str, usize, usize); 12] {
        let h = self.hidden;
        [
            ("gate_w", 4 * h, self.input()),
            ("gate_u", 4 * h, h),
            ("gate_b", 4 * h, 1),
            ("embedding", self.vocab_size(), self.embed),
            ("out_w", self.vocab_size(), h),
            ("out_b", self.vocab_size(), 1),
            ("enc_w", h, self.feature),
            ("enc_b", h, 1),
            ("att_w", self.attention, self.feature),
            ("att_u", self.attention, h),
            ("att_b", self.attention, 1),
            ("att_v", self.attention, 1),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.block_shapes().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Every learnable weight, row-major.
///
/// The four LSTM gates are stacked in `gate_w`/`gate_u`/`gate_b` in the
/// order forget, input, output, candidate; rows `k*H..(k+1)*H` hold gate `k`.
/// The same type carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub dims: ModelDims,
    pub gate_w: Vec<f64>,
    pub gate_u: Vec<f64>,
    pub gate_b: Vec<f64>,
    pub embedding: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    pub att_w: Vec<f64>,
    pub att_u: Vec<f64>,
    pub att_b: Vec<f64>,
    pub att_v: Vec<f64>,
}

/// Default half-width of the uniform initializer.
pub const INIT_SCALE: f64 = 0.08;

impl ModelParameters {
    pub fn zeros(dims: ModelDims) -> Self {
        let [gw, gu, gb, e, ow, ob, ew, eb, aw, au, ab, av] =
            dims.block_shapes().map(|(_, r, c)| vec![0.0; r * c]);
        Self {
            dims,
            gate_w: gw,
            gate_u: gu,
            gate_b: gb,
            embedding: e,
            out_w: ow,
            out_b: ob,
            enc_w: ew,
            enc_b: eb,
            att_w: aw,
            att_u: au,
            att_b: ab,
            att_v: av,
        }
    }

    /// Uniform in `[-scale, scale]` from a seeded stream.
    pub fn random(dims: ModelDims, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in p.blocks_mut() {
            for w in block.iter_mut() {
                *w = rng.random_range(-scale..=scale);
            }
        }
        p
    }

    pub fn blocks(&self) -> [&[f64]; 12] {
        [
            &self.gate_w,
            &self.gate_u,
            &self.gate_b,
            &self.embedding,
            &self.out_w,
            &self.out_b,
            &self.enc_w,
            &self.enc_b,
            &self.att_w,
            &self.att_u,
            &self.att_b,
            &self.att_v,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 12] {
        [
            &mut self.gate_w,
            &mut self.gate_u,
            &mut self.gate_b,
            &mut self.embedding,
            &mut self.out_w,
            &mut self.out_b,
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.att_w,
            &mut self.att_u,
            &mut self.att_b,
            &mut self.att_v,
        ]
    }

    /// Flat copy of all blocks in declared order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    /// Rebuilds from a flat vector in declared order.
    pub fn from_flat(dims: ModelDims, flat: &[f64]) -> Option<Self> {
        if flat.len() != dims.n_params() {
            return None;
        }
        let mut p = Self::zeros(dims);
        let mut offset = 0;
        for block in p.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Some(p)
    }

    /// Shapes agree with `dims` and every entry is finite.
    pub fn is_consistent(&self) -> bool {
        self.blocks()
            .iter()
            .zip(self.dims.block_shapes())
            .all(|(b, (_, r, c))| b.len() == r * c && b.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &ModelParameters, scale: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.blocks().iter().flat_map(|b| b.iter()).map(|x| x * x).sum())
    }
}
