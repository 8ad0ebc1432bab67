//! Vision (patch) and text (token) transformer encoders producing CLS features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::AttentionMask;
use super::block::{Block, BlockCache};
use super::layers::{LayerNorm, LayerNormCache, Linear};
use super::params::{Grads, Init, ParamId, ParamStore};
use crate::encode::NormalizedImage;
use crate::error::{Error, Result};
use crate::text::{TokenSequence, PAD_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// 0 selects global attention.
    pub window_size: usize,
    pub mlp_ratio: usize,
    pub feature_dim: usize,
    /// LayerNorm over each flattened patch before projection. Rendered
    /// images are mostly flat background, which otherwise dominates every
    /// token and stalls training from scratch.
    pub patch_norm: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            image_size: 96,
            patch_size: 16,
            embed_dim: 64,
            n_layers: 2,
            n_heads: 4,
            window_size: 0,
            mlp_ratio: 4,
            feature_dim: 64,
            patch_norm: true,
        }
    }
}

impl EncoderConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn n_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Normalized patches project to tokens of std about `INIT_STD·√(3p²)`;
    /// position embeddings start at that scale so position is not drowned
    /// out by content. Without patch norm the usual `INIT_STD` applies.
    pub fn pos_init_std(&self) -> f64 {
        if self.patch_norm {
            INIT_STD * ((3 * self.patch_size * self.patch_size) as f64).sqrt()
        } else {
            INIT_STD
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!("image_size {} is not divisible by patch_size {}", self.image_size, self.patch_size));
        }
        if self.n_heads == 0 || self.embed_dim == 0 || self.embed_dim % self.n_heads != 0 {
            return bad(format!("embed_dim {} is not divisible by n_heads {}", self.embed_dim, self.n_heads));
        }
        if self.window_size != 0 && self.grid() % self.window_size != 0 {
            return bad(format!("window_size {} does not divide the {}-patch grid side", self.window_size, self.grid()));
        }
        if self.mlp_ratio == 0 || self.feature_dim == 0 || self.n_layers == 0 {
            return bad("mlp_ratio, feature_dim and n_layers must be positive".into());
        }
        Ok(())
    }

    /// Attention mask per layer; odd layers use the shifted partition.
    pub fn layer_masks(&self) -> Result<Vec<Option<AttentionMask>>> {
        (0..self.n_layers)
            .map(|l| {
                if self.window_size == 0 {
                    Ok(None)
                } else {
                    let shift = if l % 2 == 1 { self.window_size / 2 } else { 0 };
                    AttentionMask::windowed(self.grid(), self.window_size, shift).map(Some)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    pub feature_dim: usize,
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.embed_dim % self.n_heads != 0 || self.embed_dim == 0 {
            return Err(Error::Config(format!("text embed_dim {} is not divisible by n_heads {}", self.embed_dim, self.n_heads)));
        }
        if self.vocab_size <= PAD_ID as usize || self.context_length == 0 || self.n_layers == 0 || self.feature_dim == 0 {
            return Err(Error::Config("text encoder sizes must be positive and cover the special ids".into()));
        }
        Ok(())
    }
}

/// Shared tail of both encoders: blocks, final norm on CLS, feature head.
#[derive(Debug, Clone)]
struct Trunk {
    blocks: Vec<Block>,
    norm: LayerNorm,
    head: Linear,
}

/// Forward activations of one encoder call.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    blocks: Vec<BlockCache>,
    norm: LayerNormCache,
    cls_normed: Vec<f64>,
    n_tokens: usize,
    input: EncoderInput,
}

#[derive(Debug, Clone)]
enum EncoderInput {
    /// Projection input (normalized when `patch_norm` is on) and its norm cache.
    Patches(Vec<f64>, Option<LayerNormCache>),
    Tokens(Vec<u32>),
}

impl EncoderCache {
    /// Per-layer, per-head attention weights recorded during the pass.
    pub fn attention(&self) -> Vec<Vec<Vec<f64>>> {
        self.blocks.iter().map(|b| b.probs.clone()).collect()
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }
}

impl Trunk {
    fn new(store: &mut ParamStore, name: &str, d: usize, layers: usize, heads: usize, ratio: usize, feat: usize, rng: &mut impl Rng) -> Self {
        let blocks = (0..layers)
            .map(|l| Block::new(store, &format!("{name}.block{l}"), d, heads, ratio, INIT_STD, rng))
            .collect();
        Trunk {
            blocks,
            norm: LayerNorm::new(store, &format!("{name}.norm"), d, rng),
            head: Linear::new(store, &format!("{name}.head"), d, feat, Linear::fan_in_std(d), rng),
        }
    }

    fn forward(&self, p: &ParamStore, mut x: Vec<f64>, masks: &[Option<AttentionMask>], input: EncoderInput) -> (Vec<f64>, EncoderCache) {
        let d = self.norm.dim;
        let n_tokens = x.len() / d;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (b, m) in self.blocks.iter().zip(masks) {
            let (y, c) = b.forward(p, &x, m.as_ref());
            caches.push(c);
            x = y;
        }
        let (cls_normed, norm) = self.norm.forward(p, &x[..d]);
        let feat = self.head.forward(p, &cls_normed, 1);
        (feat, EncoderCache { blocks: caches, norm, cls_normed, n_tokens, input })
    }

    /// Returns the gradient w.r.t. the trunk's input tokens.
    fn backward(&self, p: &ParamStore, g: &mut Grads, c: &EncoderCache, dfeat: &[f64]) -> Vec<f64> {
        let d = self.norm.dim;
        let dcls = self.head.backward(p, g, &c.cls_normed, dfeat, 1);
        let dcls = self.norm.backward(p, g, &c.norm, &dcls);
        let mut dx = vec![0.0; c.n_tokens * d];
        dx[..d].copy_from_slice(&dcls);
        for (b, bc) in self.blocks.iter().zip(&c.blocks).rev() {
            dx = b.backward(p, g, bc, &dx);
        }
        dx
    }
}

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct VisionEncoder {
    pub config: EncoderConfig,
    pub patch_norm: Option<LayerNorm>,
    pub patch: Linear,
    pub cls: ParamId,
    pub pos: ParamId,
    trunk: Trunk,
    masks: Vec<Option<AttentionMask>>,
}

impl VisionEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let p = config.patch_size;
        let patch_norm = config.patch_norm.then(|| LayerNorm::new(store, &format!("{name}.patch_norm"), p * p * 3, rng));
        let patch = Linear::new(store, &format!("{name}.patch"), p * p * 3, d, INIT_STD, rng);
        let cls = store.add(format!("{name}.cls"), &[d], Init::TruncNormal(INIT_STD), rng);
        let pos = store.add(format!("{name}.pos"), &[config.n_patches() + 1, d], Init::TruncNormal(config.pos_init_std()), rng);
        let trunk = Trunk::new(store, name, d, config.n_layers, config.n_heads, config.mlp_ratio, config.feature_dim, rng);
        Ok(VisionEncoder { config: config.clone(), patch_norm, patch, cls, pos, trunk, masks: config.layer_masks()? })
    }

    pub fn is_windowed(&self) -> bool {
        self.config.window_size != 0
    }

    /// Flattened `p × p × 3` patches in row-major patch order.
    pub fn patchify(&self, img: &NormalizedImage) -> Result<Vec<f64>> {
        let c = &self.config;
        if img.width != c.image_size || img.height != c.image_size {
            return Err(Error::Shape(format!(
                "image is {}x{}, encoder expects {}x{}",
                img.width, img.height, c.image_size, c.image_size
            )));
        }
        let (g, p, w) = (c.grid(), c.patch_size, img.width);
        let mut out = Vec::with_capacity(c.n_patches() * p * p * 3);
        for pr in 0..g {
            for pc in 0..g {
                for y in 0..p {
                    let row = ((pr * p + y) * w + pc * p) * 3;
                    out.extend_from_slice(&img.data[row..row + p * 3]);
                }
            }
        }
        Ok(out)
    }

    /// CLS token followed by projected patches, plus position embeddings.
    /// Also returns the projection input.
    pub fn patch_embed(&self, p: &ParamStore, img: &NormalizedImage) -> Result<(Vec<f64>, Vec<f64>)> {
        let (tokens, patches, _) = self.embed(p, img)?;
        Ok((tokens, patches))
    }

    fn embed(&self, p: &ParamStore, img: &NormalizedImage) -> Result<(Vec<f64>, Vec<f64>, Option<LayerNormCache>)> {
        let mut patches = self.patchify(img)?;
        let mut norm_cache = None;
        if let Some(ln) = &self.patch_norm {
            let (y, c) = ln.forward(p, &patches);
            patches = y;
            norm_cache = Some(c);
        }
        let np = self.config.n_patches();
        let proj = self.patch.forward(p, &patches, np);
        let mut tokens = Vec::with_capacity((np + 1) * self.config.embed_dim);
        tokens.extend_from_slice(p.get(self.cls));
        tokens.extend_from_slice(&proj);
        for (t, e) in tokens.iter_mut().zip(p.get(self.pos)) {
            *t += e;
        }
        Ok((tokens, patches, norm_cache))
    }

    pub fn forward(&self, p: &ParamStore, img: &NormalizedImage) -> Result<(Vec<f64>, EncoderCache)> {
        let (tokens, patches, norm) = self.embed(p, img)?;
        Ok(self.trunk.forward(p, tokens, &self.masks, EncoderInput::Patches(patches, norm)))
    }

    pub fn backward(&self, p: &ParamStore, g: &mut Grads, c: &EncoderCache, dfeat: &[f64]) {
        let d = self.config.embed_dim;
        let dx = self.trunk.backward(p, g, c, dfeat);
        for (a, b) in g.get_mut(p, self.pos).iter_mut().zip(&dx) {
            *a += b;
        }
        for (a, b) in g.get_mut(p, self.cls).iter_mut().zip(&dx[..d]) {
            *a += b;
        }
        let EncoderInput::Patches(patches, norm) = &c.input else { unreachable!("vision cache holds patches") };
        let np = self.config.n_patches();
        match (&self.patch_norm, norm) {
            (Some(ln), Some(nc)) => {
                let dpatches = self.patch.backward(p, g, patches, &dx[d..], np);
                ln.backward(p, g, nc, &dpatches);
            }
            _ => self.patch.backward_params(p, g, patches, &dx[d..], np),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub config: TextEncoderConfig,
    pub token_embedding: ParamId,
    pub pos: ParamId,
    trunk: Trunk,
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: &TextEncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let token_embedding = store.add(format!("{name}.tok"), &[config.vocab_size, d], Init::TruncNormal(INIT_STD), rng);
        let pos = store.add(format!("{name}.pos"), &[config.context_length, d], Init::TruncNormal(INIT_STD), rng);
        let trunk = Trunk::new(store, name, d, config.n_layers, config.n_heads, config.mlp_ratio, config.feature_dim, rng);
        Ok(TextEncoder { config: config.clone(), token_embedding, pos, trunk })
    }

    /// Trailing PADs are dropped before the pass; since PAD keys are masked
    /// they cannot influence any other position, so this is exact.
    pub fn forward(&self, p: &ParamStore, tokens: &TokenSequence) -> Result<(Vec<f64>, EncoderCache)> {
        let c = &self.config;
        let d = c.embed_dim;
        let end = tokens.ids.iter().rposition(|&i| i != PAD_ID).map_or(1, |i| i + 1);
        if end > c.context_length {
            return Err(Error::Shape(format!("{end} tokens exceed the context length {}", c.context_length)));
        }
        let ids = tokens.ids.get(..end).map_or_else(|| vec![PAD_ID], <[u32]>::to_vec);
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= c.vocab_size) {
            return Err(Error::Shape(format!("token id {bad} is outside the vocabulary of {}", c.vocab_size)));
        }
        let emb = p.get(self.token_embedding);
        let pos = p.get(self.pos);
        let mut x = Vec::with_capacity(ids.len() * d);
        for (t, &id) in ids.iter().enumerate() {
            let e = &emb[id as usize * d..(id as usize + 1) * d];
            x.extend(e.iter().zip(&pos[t * d..(t + 1) * d]).map(|(a, b)| a + b));
        }
        let valid: Vec<bool> = ids.iter().map(|&i| i != PAD_ID).collect();
        let mask = valid.iter().any(|v| !v).then(|| AttentionMask::key_padding(&valid));
        let masks = vec![mask; self.trunk.blocks.len()];
        Ok(self.trunk.forward(p, x, &masks, EncoderInput::Tokens(ids)))
    }

    pub fn backward(&self, p: &ParamStore, g: &mut Grads, c: &EncoderCache, dfeat: &[f64]) {
        let d = self.config.embed_dim;
        let dx = self.trunk.backward(p, g, c, dfeat);
        for (a, b) in g.get_mut(p, self.pos).iter_mut().zip(&dx) {
            *a += b;
        }
        let EncoderInput::Tokens(ids) = &c.input else { unreachable!("text cache holds token ids") };
        let demb = g.get_mut(p, self.token_embedding);
        for (t, &id) in ids.iter().enumerate() {
            let row = &mut demb[id as usize * d..(id as usize + 1) * d];
            row.iter_mut().zip(&dx[t * d..(t + 1) * d]).for_each(|(a, b)| *a += b);
        }
    }
}
