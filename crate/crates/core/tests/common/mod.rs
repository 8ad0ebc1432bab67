#![allow(dead_code)]

pub mod invariants;

use modimg::encode::{Canvas, Modality, WHITE};
use modimg::model::{batch_gradient, EncoderConfig, Example, FusionModel, ModelConfig, TextEncoderConfig};
use modimg::text::{TokenSequence, CLS_ID, PAD_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(window_size: usize, with_text: bool, n_outputs: usize) -> ModelConfig {
    ModelConfig {
        modalities: vec![Modality::Clinical, Modality::Medications],
        vision: EncoderConfig {
            image_size: 8,
            patch_size: 2,
            embed_dim: 8,
            n_layers: 2,
            n_heads: 2,
            window_size,
            mlp_ratio: 2,
            feature_dim: 6,
            patch_norm: true,
        },
        text: with_text.then_some(TextEncoderConfig {
            vocab_size: 300,
            context_length: 12,
            embed_dim: 8,
            n_layers: 1,
            n_heads: 2,
            mlp_ratio: 2,
            feature_dim: 6,
        }),
        fusion_dim: 7,
        n_outputs,
        init_seed: 3,
    }
}

pub fn random_canvas(rng: &mut impl Rng, size: u32) -> Canvas {
    let px = (0..size * size * 3).map(|_| rng.random::<u8>()).collect();
    Canvas::from_rgb_bytes(size, size, px, WHITE)
}

pub fn random_examples(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let images = cfg.modalities.iter().map(|_| random_canvas(&mut rng, cfg.vision.image_size as u32)).collect();
            let tokens = cfg.text.as_ref().map(|t| {
                let len = rng.random_range(1..t.context_length - 2);
                let mut ids = vec![CLS_ID];
                ids.extend((0..len).map(|_| rng.random_range(0..t.vocab_size as u32)).filter(|&x| x != PAD_ID));
                ids.resize(t.context_length, PAD_ID);
                TokenSequence { ids }
            });
            let labels = (0..cfg.n_outputs).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
            Example { id: format!("s{i}"), images, tokens, labels }
        })
        .collect()
}

/// Replaces the default small init with wider random values so every path
/// carries a gradient well above finite-difference noise.
pub fn scramble_params(model: &mut FusionModel, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in model.params.data.iter_mut() {
        *v = rng.random_range(-scale..scale);
    }
}

pub struct GradCheck {
    pub n_params: usize,
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub n_failed: usize,
}

/// Compares every analytic gradient with a central difference.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(model: &FusionModel, batch: &[Example], eps: f64, floor: f64, tol: f64) -> GradCheck {
    let refs: Vec<&Example> = batch.iter().collect();
    let (_, analytic) = batch_gradient(model, &refs).expect("analytic gradient");
    let mut m = model.clone();
    let mut out = GradCheck { n_params: m.params.len(), max_rel_err: 0.0, worst_tensor: String::new(), n_failed: 0 };
    for i in 0..m.params.len() {
        let orig = m.params.data[i];
        m.params.data[i] = orig + eps;
        let lp = batch_gradient(&m, &refs).unwrap().0;
        m.params.data[i] = orig - eps;
        let lm = batch_gradient(&m, &refs).unwrap().0;
        m.params.data[i] = orig;
        let num = (lp - lm) / (2.0 * eps);
        let a = analytic.data[i];
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(floor);
        if rel > tol {
            out.n_failed += 1;
        }
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst_tensor = m.params.tensor_of(i).unwrap().name.clone();
        }
    }
    out
}
