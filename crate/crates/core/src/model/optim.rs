//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn update(&mut self, params: &mut ParamStore, g: &Grads, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &gi), m), v) in params.data.iter_mut().zip(&g.data).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
            let update = (*m / c1) / ((*v / c2).sqrt() + self.eps);
            *p -= lr * (update + self.weight_decay * *p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Init;
    use rand::SeedableRng;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        s.add("w", &[2], Init::Zeros, &mut rng);
        let mut g = s.zeros_like();
        g.data = vec![0.5, -3.0];
        let mut opt = AdamW::new(2, 0.0);
        opt.update(&mut s, &g, 0.1);
        assert!((s.data[0] + 0.1).abs() < 1e-6);
        assert!((s.data[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        s.add("w", &[3], Init::TruncNormal(1.0), &mut rng);
        let before = s.clone();
        let mut g = s.zeros_like();
        g.data = vec![1.0, 2.0, 3.0];
        let mut opt = AdamW::new(3, 3e-8);
        opt.update(&mut s, &g, 0.0);
        assert_eq!(s, before);
    }
}
