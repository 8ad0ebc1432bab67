//! Pre-norm transformer block: `x + MHA(LN(x))`, then `x + MLP(LN(x))`.

use rand::Rng;

use super::attention::{mha_backward, mha_forward, AttentionMask};
use super::layers::{gelu, gelu_grad, LayerNorm, LayerNormCache, Linear};
use super::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub dim: usize,
    pub heads: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    h1: Vec<f64>,
    ln1: LayerNormCache,
    qkv: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
    attn: Vec<f64>,
    h2: Vec<f64>,
    ln2: LayerNormCache,
    u: Vec<f64>,
    g: Vec<f64>,
}

impl Block {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, mlp_ratio: usize, std: f64, rng: &mut impl Rng) -> Self {
        let hidden = dim * mlp_ratio;
        Block {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim, rng),
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, std, rng),
            proj: Linear::new(store, &format!("{name}.proj"), dim, dim, std, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim, rng),
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, std, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, std, rng),
            dim,
            heads,
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &[f64], mask: Option<&AttentionMask>) -> (Vec<f64>, BlockCache) {
        let n = x.len() / self.dim;
        let (h1, ln1) = self.ln1.forward(p, x);
        let qkv = self.qkv.forward(p, &h1, n);
        let (attn, probs) = mha_forward(&qkv, n, self.dim, self.heads, mask);
        let a = self.proj.forward(p, &attn, n);
        let x1: Vec<f64> = x.iter().zip(&a).map(|(u, v)| u + v).collect();
        let (h2, ln2) = self.ln2.forward(p, &x1);
        let u = self.fc1.forward(p, &h2, n);
        let g: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
        let m = self.fc2.forward(p, &g, n);
        let out = x1.iter().zip(&m).map(|(u, v)| u + v).collect();
        (out, BlockCache { h1, ln1, qkv, probs, attn, h2, ln2, u, g })
    }

    pub fn backward(&self, p: &ParamStore, grads: &mut Grads, c: &BlockCache, dout: &[f64]) -> Vec<f64> {
        let n = dout.len() / self.dim;
        let mut dg = self.fc2.backward(p, grads, &c.g, dout, n);
        for (d, &u) in dg.iter_mut().zip(&c.u) {
            *d *= gelu_grad(u);
        }
        let dh2 = self.fc1.backward(p, grads, &c.h2, &dg, n);
        let mut dx1 = self.ln2.backward(p, grads, &c.ln2, &dh2);
        dx1.iter_mut().zip(dout).for_each(|(a, b)| *a += b);
        let dattn = self.proj.backward(p, grads, &c.attn, &dx1, n);
        let dqkv = mha_backward(&c.qkv, &c.probs, &dattn, n, self.dim);
        let dh1 = self.qkv.backward(p, grads, &c.h1, &dqkv, n);
        let mut dx = self.ln1.backward(p, grads, &c.ln1, &dh1);
        dx.iter_mut().zip(&dx1).for_each(|(a, b)| *a += b);
        dx
    }
}
