//! Late fusion: per-modality features concatenated, linearly projected, classified.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderCache, EncoderConfig, TextEncoder, TextEncoderConfig, VisionEncoder};
use super::layers::Linear;
use super::params::{Grads, ParamStore};
use crate::encode::{Modality, NormalizedImage};
use crate::error::{Error, Result};
use crate::text::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mortality,
    Phenotyping,
}

impl Task {
    pub fn n_outputs(self) -> usize {
        match self {
            Task::Mortality => 1,
            Task::Phenotyping => crate::catalog::PHENOTYPES.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Image modalities; stored in fusion order.
    pub modalities: Vec<Modality>,
    pub vision: EncoderConfig,
    pub text: Option<TextEncoderConfig>,
    pub fusion_dim: usize,
    pub n_outputs: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() && self.text.is_none() {
            return Err(Error::Config("at least one modality or text is required".into()));
        }
        let mut sorted = self.modalities.clone();
        sorted.sort_by_key(|m| Modality::FUSION_ORDER.iter().position(|o| o == m));
        sorted.dedup();
        if sorted != self.modalities {
            return Err(Error::Config("modalities must be distinct and in C, M, X, E order".into()));
        }
        if self.fusion_dim == 0 || self.n_outputs == 0 {
            return Err(Error::Config("fusion_dim and n_outputs must be positive".into()));
        }
        self.vision.validate()?;
        if let Some(t) = &self.text {
            t.validate()?;
        }
        Ok(())
    }

    pub fn concat_width(&self) -> usize {
        self.modalities.len() * self.vision.feature_dim + self.text.as_ref().map_or(0, |t| t.feature_dim)
    }
}

/// One instance: one normalized image per configured modality, plus tokens when text is on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub images: Vec<NormalizedImage>,
    pub tokens: Option<TokenSequence>,
}

#[derive(Debug, Clone)]
pub struct FusionArch {
    pub vision: Vec<VisionEncoder>,
    pub text: Option<TextEncoder>,
    pub projection: Linear,
    pub head: Linear,
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    pub config: ModelConfig,
    pub arch: FusionArch,
    pub params: ParamStore,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub vision: Vec<EncoderCache>,
    pub text: Option<EncoderCache>,
    concat: Vec<f64>,
    projected: Vec<f64>,
}

impl FusionModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamStore::new();
        let vision = config
            .modalities
            .iter()
            .map(|m| VisionEncoder::new(&mut params, &format!("enc_{}", m.file_tag()), &config.vision, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let text = config.text.as_ref().map(|t| TextEncoder::new(&mut params, "enc_text", t, &mut rng)).transpose()?;
        let projection = Linear::new(&mut params, "fusion.proj", config.concat_width(), config.fusion_dim, Linear::fan_in_std(config.concat_width()), &mut rng);
        let head = Linear::new(&mut params, "fusion.head", config.fusion_dim, config.n_outputs, Linear::fan_in_std(config.fusion_dim), &mut rng);
        Ok(FusionModel { config, arch: FusionArch { vision, text, projection, head }, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &ModelInput) -> Result<(Vec<f64>, ForwardCache)> {
        forward_with(&self.arch, &self.params, input)
    }

    pub fn predict_logits(&self, input: &ModelInput) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }
}

/// Features from every encoder, in fusion order (C, M, X, E, then text).
pub fn encode_all(arch: &FusionArch, p: &ParamStore, input: &ModelInput) -> Result<(Vec<Vec<f64>>, Vec<EncoderCache>, Option<EncoderCache>)> {
    if input.images.len() != arch.vision.len() {
        return Err(Error::Shape(format!("{} images given for {} image encoders", input.images.len(), arch.vision.len())));
    }
    let mut feats = Vec::new();
    let mut vc = Vec::with_capacity(arch.vision.len());
    for (enc, img) in arch.vision.iter().zip(&input.images) {
        let (f, c) = enc.forward(p, img)?;
        feats.push(f);
        vc.push(c);
    }
    let tc = match (&arch.text, &input.tokens) {
        (Some(enc), Some(tokens)) => {
            let (f, c) = enc.forward(p, tokens)?;
            feats.push(f);
            Some(c)
        }
        (None, None) => None,
        (Some(_), None) => return Err(Error::Shape("text encoder configured but no tokens given".into())),
        (None, Some(_)) => return Err(Error::Shape("tokens given but no text encoder configured".into())),
    };
    Ok((feats, vc, tc))
}

/// Concatenates features, projects, and applies the task head.
pub fn fuse_and_classify(arch: &FusionArch, p: &ParamStore, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(fuse(arch, p, features)?.0)
}

fn fuse(arch: &FusionArch, p: &ParamStore, features: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let concat: Vec<f64> = features.iter().flatten().copied().collect();
    if concat.len() != arch.projection.fan_in {
        return Err(Error::Shape(format!(
            "concatenated features have width {}, projection expects {}",
            concat.len(),
            arch.projection.fan_in
        )));
    }
    let projected = arch.projection.forward(p, &concat, 1);
    let logits = arch.head.forward(p, &projected, 1);
    Ok((logits, concat, projected))
}

pub fn forward_with(arch: &FusionArch, p: &ParamStore, input: &ModelInput) -> Result<(Vec<f64>, ForwardCache)> {
    let (feats, vision, text) = encode_all(arch, p, input)?;
    let (logits, concat, projected) = fuse(arch, p, &feats)?;
    Ok((logits, ForwardCache { vision, text, concat, projected }))
}

/// Accumulates `dL/dθ` into `g` given `dL/dlogits`.
pub fn backward_with(arch: &FusionArch, p: &ParamStore, g: &mut Grads, cache: &ForwardCache, dlogits: &[f64]) {
    let dproj = arch.head.backward(p, g, &cache.projected, dlogits, 1);
    let dconcat = arch.projection.backward(p, g, &cache.concat, &dproj, 1);
    let mut off = 0;
    for (enc, c) in arch.vision.iter().zip(&cache.vision) {
        let w = enc.config.feature_dim;
        enc.backward(p, g, c, &dconcat[off..off + w]);
        off += w;
    }
    if let (Some(enc), Some(c)) = (&arch.text, &cache.text) {
        enc.backward(p, g, c, &dconcat[off..off + enc.config.feature_dim]);
    }
}
