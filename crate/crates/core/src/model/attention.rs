//! Masked multi-head scaled dot-product attention.

use super::linalg::{gemm, MatMut, MatRef};
use super::window::window_assignment;
use crate::error::Result;

/// Dense `n × n` allow-mask; `allowed(i, j)` means query `i` may attend key `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    pub n: usize,
    allow: Vec<bool>,
}

impl AttentionMask {
    pub fn full(n: usize) -> Self {
        AttentionMask { n, allow: vec![true; n * n] }
    }

    /// Keys at `valid[j] == false` are hidden from every query.
    pub fn key_padding(valid: &[bool]) -> Self {
        let n = valid.len();
        let allow = (0..n * n).map(|k| valid[k % n]).collect();
        AttentionMask { n, allow }
    }

    /// Token 0 is CLS and attends everything; patch tokens attend only
    /// patches in their (possibly shifted) window.
    pub fn windowed(grid: usize, window: usize, shift: usize) -> Result<Self> {
        let assign = window_assignment(grid, window, shift)?;
        let n = grid * grid + 1;
        let mut allow = vec![false; n * n];
        allow[..n].iter_mut().for_each(|a| *a = true);
        for i in 1..n {
            for j in 1..n {
                allow[i * n + j] = assign[i - 1] == assign[j - 1];
            }
        }
        Ok(AttentionMask { n, allow })
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.n + j]
    }
}

/// Row-wise stable softmax of `scores` (rows of length `m`), masked entries set to 0.
pub fn masked_softmax(scores: &mut [f64], m: usize, mask: Option<&AttentionMask>) {
    for (i, row) in scores.chunks_exact_mut(m).enumerate() {
        let ok = |j: usize| mask.is_none_or(|mk| mk.allowed(i, j));
        let max = (0..m).filter(|&j| ok(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if ok(j) {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = 0.0;
            }
        }
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
}

/// Single-head `softmax(Q Kᵀ / √d) V`. Returns `(output n × dv, weights n × m)`.
pub fn scaled_dot_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    n: usize,
    m: usize,
    d: usize,
    dv: usize,
    mask: Option<&AttentionMask>,
) -> (Vec<f64>, Vec<f64>) {
    let mut s = vec![0.0; n * m];
    gemm(
        1.0 / (d as f64).sqrt(),
        MatRef::new(q, n, d),
        MatRef::new(k, m, d).t(),
        0.0,
        MatMut::new(&mut s, n, m),
    );
    masked_softmax(&mut s, m, mask);
    let mut out = vec![0.0; n * dv];
    gemm(1.0, MatRef::new(&s, n, m), MatRef::new(v, m, dv), 0.0, MatMut::new(&mut out, n, dv));
    (out, s)
}

/// Multi-head attention core over a fused `n × 3d` QKV matrix.
/// Returns concatenated head outputs (`n × d`) and per-head weights.
pub fn mha_forward(qkv: &[f64], n: usize, d: usize, heads: usize, mask: Option<&AttentionMask>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dh = d / heads;
    let stride = 3 * d;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; n * d];
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut s = vec![0.0; n * n];
        gemm(
            scale,
            MatRef::cols_of(qkv, n, stride, h * dh, dh),
            MatRef::cols_of(qkv, n, stride, d + h * dh, dh).t(),
            0.0,
            MatMut::new(&mut s, n, n),
        );
        masked_softmax(&mut s, n, mask);
        gemm(
            1.0,
            MatRef::new(&s, n, n),
            MatRef::cols_of(qkv, n, stride, 2 * d + h * dh, dh),
            0.0,
            MatMut::cols_of(&mut out, n, d, h * dh, dh),
        );
        probs.push(s);
    }
    (out, probs)
}

/// Backward of [`mha_forward`]: gradient w.r.t. the fused QKV matrix.
pub fn mha_backward(qkv: &[f64], probs: &[Vec<f64>], dout: &[f64], n: usize, d: usize) -> Vec<f64> {
    let heads = probs.len();
    let dh = d / heads;
    let stride = 3 * d;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dqkv = vec![0.0; n * stride];
    for (h, p) in probs.iter().enumerate() {
        let dout_h = MatRef::cols_of(dout, n, d, h * dh, dh);
        // dV = Pᵀ dO
        gemm(1.0, MatRef::new(p, n, n).t(), dout_h, 0.0, MatMut::cols_of(&mut dqkv, n, stride, 2 * d + h * dh, dh));
        // dP = dO Vᵀ
        let mut ds = vec![0.0; n * n];
        gemm(
            1.0,
            dout_h,
            MatRef::cols_of(qkv, n, stride, 2 * d + h * dh, dh).t(),
            0.0,
            MatMut::new(&mut ds, n, n),
        );
        // softmax backward, row by row
        for (dr, pr) in ds.chunks_exact_mut(n).zip(p.chunks_exact(n)) {
            let dot: f64 = dr.iter().zip(pr).map(|(a, b)| a * b).sum();
            for (a, b) in dr.iter_mut().zip(pr) {
                *a = b * (*a - dot);
            }
        }
        gemm(
            scale,
            MatRef::new(&ds, n, n),
            MatRef::cols_of(qkv, n, stride, d + h * dh, dh),
            0.0,
            MatMut::cols_of(&mut dqkv, n, stride, h * dh, dh),
        );
        gemm(
            scale,
            MatRef::new(&ds, n, n).t(),
            MatRef::cols_of(qkv, n, stride, h * dh, dh),
            0.0,
            MatMut::cols_of(&mut dqkv, n, stride, d + h * dh, dh),
        );
    }
    dqkv
}
