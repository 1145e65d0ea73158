// Small dense helpers over row-major slices.

use alloc::vec::Vec;

/// out = m · x, m is rows × x.len().
pub(crate) fn matvec(m: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    debug_assert_eq!(m.len(), rows * cols);
    m.chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// out += m · x
pub(crate) fn matvec_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// out += mᵀ · y, m is y.len() × out.len().
pub(crate) fn matvec_t_acc(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &yi) in m.chunks_exact(cols).zip(y) {
        if yi == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * yi;
        }
    }
}

/// g += y ⊗ x (g is y.len() × x.len()).
pub(crate) fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &yi) in g.chunks_exact_mut(cols).zip(y) {
        if yi == 0.0 {
            continue;
        }
        for (gv, &xv) in row.iter_mut().zip(x) {
            *gv += yi * xv;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Index of the first maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matvec_and_transpose() {
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        assert_eq!(matvec(&m, 2, &[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        let mut out = [0.0; 3];
        matvec_t_acc(&m, &[1.0, 1.0], &mut out);
        assert_eq!(out, [5.0, 7.0, 9.0]);
    }

    #[test]
    fn softmax_is_normalized_and_stable() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[2] == 0.0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert!((sigmoid(-800.0)).abs() < 1e-300 && sigmoid(0.0) == 0.5);
    }
}
