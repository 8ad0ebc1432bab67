//! Attention saliency over image patches and text tokens.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::encode::{panel_rects, Canvas, Rgb};
use crate::error::{Error, Result};
use crate::model::EncoderCache;
use crate::text::{BpeModel, TokenSequence, CLS_ID, PAD_ID};

/// Per-layer, per-head `n × n` attention from one encoder pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    pub layers: Vec<Vec<Vec<f64>>>,
    pub n_tokens: usize,
    pub windowed: bool,
}

impl AttentionStack {
    pub fn from_cache(cache: &EncoderCache, windowed: bool) -> Self {
        AttentionStack { layers: cache.attention(), n_tokens: cache.n_tokens(), windowed }
    }

    /// Largest deviation of a row sum from 1, skipping fully masked rows.
    pub fn max_row_sum_error(&self) -> f64 {
        let n = self.n_tokens;
        self.layers
            .iter()
            .flatten()
            .flat_map(|a| a.chunks_exact(n).map(|r| r.iter().sum::<f64>()))
            .filter(|&s| s != 0.0)
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn head_mean(&self, layer: usize) -> Vec<f64> {
        let heads = &self.layers[layer];
        let mut m = vec![0.0; self.n_tokens * self.n_tokens];
        for h in heads {
            m.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|v| *v /= heads.len() as f64);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyMode {
    LastLayerMean,
    Rollout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub grid_side: usize,
    /// Row-major patch grid in [0, 1].
    pub grid: Vec<f64>,
    pub width: usize,
    pub height: usize,
    /// Row-major `height × width` in [0, 1].
    pub upsampled: Vec<f64>,
}

impl SaliencyMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.upsampled[y * self.width + x]
    }

    /// Mean upsampled saliency inside each panel of a `rows × cols` layout.
    pub fn cell_means(&self, rows: usize, cols: usize) -> Vec<f64> {
        panel_rects(self.width as u32, self.height as u32, rows, cols, 0)
            .iter()
            .map(|r| {
                let (mut sum, mut n) = (0.0, 0usize);
                for y in r.y0..r.y1 {
                    for x in r.x0..r.x1 {
                        sum += self.at(x as usize, y as usize);
                        n += 1;
                    }
                }
                if n == 0 { 0.0 } else { sum / n as f64 }
            })
            .collect()
    }

    /// Mean saliency of panel `cell` divided by the mean over the other panels.
    pub fn cell_contrast(&self, rows: usize, cols: usize, cell: (usize, usize)) -> Result<f64> {
        if cell.0 >= rows || cell.1 >= cols || rows * cols < 2 {
            return Err(Error::Shape(format!("cell {cell:?} is outside a {rows}x{cols} layout")));
        }
        let means = self.cell_means(rows, cols);
        let k = cell.0 * cols + cell.1;
        let rest = (means.iter().sum::<f64>() - means[k]) / (means.len() - 1) as f64;
        Ok(if rest > 0.0 { means[k] / rest } else if means[k] > 0.0 { f64::INFINITY } else { 1.0 })
    }
}

/// CLS-to-patch attention as a normalized map upsampled to `width × height`.
pub fn cls_attention_map(stack: &AttentionStack, mode: SaliencyMode, width: usize, height: usize) -> Result<SaliencyMap> {
    let n = stack.n_tokens;
    let g = ((n.saturating_sub(1)) as f64).sqrt().round() as usize;
    if g * g + 1 != n || stack.layers.is_empty() {
        return Err(Error::Shape(format!("{n} tokens is not CLS plus a square patch grid")));
    }
    let cls_row = match mode {
        SaliencyMode::LastLayerMean => stack.head_mean(stack.layers.len() - 1)[..n].to_vec(),
        SaliencyMode::Rollout => {
            if stack.windowed {
                return Err(Error::Validation("rollout is undefined across shifted windows; use last_layer_mean".into()));
            }
            rollout(stack)[..n].to_vec()
        }
    };
    let mut grid = cls_row[1..].to_vec();
    let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    // spreads at rounding level count as flat
    if hi - lo > 1e-9 * hi.abs() {
        grid.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        grid.iter_mut().for_each(|v| *v = 1.0);
    }
    let upsampled = bilinear_upsample(&grid, g, width, height);
    Ok(SaliencyMap { grid_side: g, grid, width, height, upsampled })
}

/// Product over layers of the row-normalized `0.5·A + 0.5·I`.
fn rollout(stack: &AttentionStack) -> Vec<f64> {
    let n = stack.n_tokens;
    let mut r: Vec<f64> = (0..n * n).map(|k| f64::from(u8::from(k / n == k % n))).collect();
    for l in 0..stack.layers.len() {
        let mut a = stack.head_mean(l);
        for (i, row) in a.chunks_exact_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v *= 0.5);
            row[i] += 0.5;
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        r = crate::model::linalg::matmul(&a, &r, n, n, n);
    }
    r
}

/// Half-pixel-centred bilinear interpolation of a `g × g` grid.
pub fn bilinear_upsample(grid: &[f64], g: usize, width: usize, height: usize) -> Vec<f64> {
    let coord = |i: usize, len: usize| {
        let s = ((i as f64 + 0.5) * g as f64 / len as f64 - 0.5).clamp(0.0, (g - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(g - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, width);
            let top = grid[y0 * g + x0] * (1.0 - fx) + grid[y0 * g + x1] * fx;
            let bot = grid[y1 * g + x0] * (1.0 - fx) + grid[y1 * g + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// The fixed 256-entry heat table shipped with the crate.
pub fn heat_colormap() -> &'static [Rgb; 256] {
    static TABLE: OnceLock<[Rgb; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0u8; 3]; 256];
        for (slot, line) in t.iter_mut().zip(include_str!("../assets/heat_colormap.csv").lines()) {
            for (c, v) in slot.iter_mut().zip(line.split(',')) {
                *c = v.trim().parse().expect("colormap entries are bytes");
            }
        }
        t
    })
}

pub fn heat_color(m: f64) -> Rgb {
    heat_colormap()[(m.clamp(0.0, 1.0) * 255.0).round() as usize]
}

/// `(1 − α·m)·pixel + α·m·heat(m)` per pixel.
pub fn overlay(image: &Canvas, map: &SaliencyMap, alpha: f64) -> Result<Canvas> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if (w, h) != (map.width, map.height) {
        return Err(Error::Shape(format!("saliency {}x{} does not match image {w}x{h}", map.width, map.height)));
    }
    let mut px = image.pixels().to_vec();
    for (i, p) in px.chunks_exact_mut(3).enumerate() {
        let m = map.upsampled[i].clamp(0.0, 1.0);
        let a = (alpha * m).clamp(0.0, 1.0);
        if a == 0.0 {
            continue;
        }
        let heat = heat_color(m);
        for c in 0..3 {
            p[c] = ((1.0 - a) * p[c] as f64 + a * heat[c] as f64).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(Canvas::from_rgb_bytes(w as u32, h as u32, px, image.background()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

/// Last-layer, head-averaged CLS attention over content tokens, renormalized.
/// The CLS position itself is omitted; PAD positions get exactly 0.
pub fn text_attention(stack: &AttentionStack, tokens: &TokenSequence, bpe: &BpeModel) -> Result<Vec<TokenWeight>> {
    let n = stack.n_tokens;
    if stack.layers.is_empty() || tokens.ids.first() != Some(&CLS_ID) {
        return Err(Error::Validation("text attention needs a CLS-led sequence and at least one layer".into()));
    }
    let row = stack.head_mean(stack.layers.len() - 1)[..n].to_vec();
    let raw: Vec<f64> = tokens
        .ids
        .iter()
        .enumerate()
        .skip(1)
        .map(|(t, &id)| if id == PAD_ID || t >= n { 0.0 } else { row[t] })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Validation("no content token received attention".into()));
    }
    Ok(tokens
        .ids
        .iter()
        .skip(1)
        .zip(raw)
        .map(|(&id, w)| TokenWeight { token: String::from_utf8_lossy(bpe.token_bytes(id)).into_owned(), weight: w / total })
        .collect())
}
