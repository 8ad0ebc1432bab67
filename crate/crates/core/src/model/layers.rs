//! Linear, layer-norm and GELU with hand-derived backward passes.

use rand::Rng;

use super::linalg::{gemm, MatMut, MatRef};
use super::params::{Grads, Init, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, init_std: f64, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), &[fan_in, fan_out], Init::TruncNormal(init_std), rng);
        let bias = store.add(format!("{name}.bias"), &[fan_out], Init::Zeros, rng);
        Linear { weight, bias, fan_in, fan_out }
    }

    /// Fan-in scaled init (the variance of PyTorch's default uniform init),
    /// for plain layers outside the residual stream.
    pub fn fan_in_std(fan_in: usize) -> f64 {
        (1.0 / (3.0 * fan_in as f64)).sqrt()
    }

    /// `x (n × fan_in) · W + b`.
    pub fn forward(&self, p: &ParamStore, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), n * self.fan_in);
        let b = p.get(self.bias);
        let mut y: Vec<f64> = (0..n).flat_map(|_| b.iter().copied()).collect();
        gemm(
            1.0,
            MatRef::new(x, n, self.fan_in),
            MatRef::new(p.get(self.weight), self.fan_in, self.fan_out),
            1.0,
            MatMut::new(&mut y, n, self.fan_out),
        );
        y
    }

    /// Accumulates weight/bias gradients and returns `dx`.
    pub fn backward(&self, p: &ParamStore, g: &mut Grads, x: &[f64], dy: &[f64], n: usize) -> Vec<f64> {
        self.backward_params(p, g, x, dy, n);
        let mut dx = vec![0.0; n * self.fan_in];
        gemm(
            1.0,
            MatRef::new(dy, n, self.fan_out),
            MatRef::new(p.get(self.weight), self.fan_in, self.fan_out).t(),
            0.0,
            MatMut::new(&mut dx, n, self.fan_in),
        );
        dx
    }

    /// Parameter gradients only, for layers whose input is data.
    pub fn backward_params(&self, p: &ParamStore, g: &mut Grads, x: &[f64], dy: &[f64], n: usize) {
        gemm(
            1.0,
            MatRef::new(x, n, self.fan_in).t(),
            MatRef::new(dy, n, self.fan_out),
            1.0,
            MatMut::new(g.get_mut(p, self.weight), self.fan_in, self.fan_out),
        );
        let db = g.get_mut(p, self.bias);
        for row in dy.chunks_exact(self.fan_out) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
    }
}

pub const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

/// Saved normalized inputs and inverse std per row.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        let gamma = store.add(format!("{name}.gamma"), &[dim], Init::Ones, rng);
        let beta = store.add(format!("{name}.beta"), &[dim], Init::Zeros, rng);
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward(&self, p: &ParamStore, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let d = self.dim;
        let (gamma, beta) = (p.get(self.gamma), p.get(self.beta));
        let n = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(n);
        for ((row, yr), xr) in x.chunks_exact(d).zip(y.chunks_exact_mut(d)).zip(xhat.chunks_exact_mut(d)) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for j in 0..d {
                xr[j] = (row[j] - mean) * is;
                yr[j] = xr[j] * gamma[j] + beta[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &ParamStore, g: &mut Grads, cache: &LayerNormCache, dy: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let gamma = p.get(self.gamma).to_vec();
        {
            let dgamma = g.get_mut(p, self.gamma);
            for (xr, dr) in cache.xhat.chunks_exact(d).zip(dy.chunks_exact(d)) {
                for j in 0..d {
                    dgamma[j] += dr[j] * xr[j];
                }
            }
        }
        {
            let dbeta = g.get_mut(p, self.beta);
            for dr in dy.chunks_exact(d) {
                for j in 0..d {
                    dbeta[j] += dr[j];
                }
            }
        }
        let mut dx = vec![0.0; dy.len()];
        for (((xr, dr), out), &is) in cache
            .xhat
            .chunks_exact(d)
            .zip(dy.chunks_exact(d))
            .zip(dx.chunks_exact_mut(d))
            .zip(&cache.inv_std)
        {
            let dxhat: Vec<f64> = (0..d).map(|j| dr[j] * gamma[j]).collect();
            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
            let mean_dx = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for j in 0..d {
                out[j] = is * (dxhat[j] - mean_d - xr[j] * mean_dx);
            }
        }
        dx
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
