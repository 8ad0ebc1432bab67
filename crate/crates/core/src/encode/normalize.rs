use super::canvas::Canvas;
use crate::error::{Error, Result};

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Channel-normalized image, `H × W × 3` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormalizedImage {
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// `(v / 255 - mean_c) / std_c` for every channel value.
pub fn normalize_image(canvas: &Canvas, mean: [f64; 3], std: [f64; 3]) -> Result<NormalizedImage> {
    if std.iter().any(|s| !(s.abs() > 0.0) || !s.is_finite()) {
        return Err(Error::Validation(format!("normalization std {std:?} must be non-zero")));
    }
    let data = canvas
        .pixels()
        .chunks_exact(3)
        .flat_map(|p| (0..3).map(move |c| (p[c] as f64 / 255.0 - mean[c]) / std[c]))
        .collect();
    Ok(NormalizedImage {
        width: canvas.width() as usize,
        height: canvas.height() as usize,
        data,
        mean,
        std,
    })
}
