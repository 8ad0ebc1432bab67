//! Deterministic rasterization of each modality into a fixed-size RGB image.

pub mod canvas;
pub mod clinical;
pub mod ecg;
pub mod layout;
pub mod meds;
pub mod normalize;
pub mod raster;

use serde::{Deserialize, Serialize};

pub use canvas::{Canvas, Rect, Rgb, BLACK, RED, WHITE};
pub use clinical::render_clinical;
pub use ecg::{preprocess_ecg, render_ecg, EcgMatrix};
pub use layout::{layout_grid, panel_rects};
pub use meds::{clip_and_normalize_doses, cumulative_dose_curve, render_medications, DoseScale, MedicationStats};
pub use normalize::{normalize_image, NormalizedImage, IMAGENET_MEAN, IMAGENET_STD};
pub use raster::{draw_marker, rasterize_polyline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeConfig {
    pub canvas_size: u32,
    pub window_h: f64,
    pub margin: u32,
    pub markers: bool,
    pub range_lines: bool,
    /// Draw normal-range guides even when a variable has no observations.
    pub range_lines_on_empty: bool,
    pub ecg_target_hz: u32,
    pub ecg_duration_s: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            canvas_size: 384,
            window_h: 48.0,
            margin: 2,
            markers: true,
            range_lines: true,
            range_lines_on_empty: true,
            ecg_target_hz: 500,
            ecg_duration_s: 5.0,
        }
    }
}

/// Background-only canvas used for an absent modality.
pub fn render_missing_modality(config: &EncodeConfig) -> Canvas {
    Canvas::new(config.canvas_size, config.canvas_size, WHITE)
}

/// Loads a CXR image and resamples it to the configured canvas.
pub fn render_cxr(path: &std::path::Path, config: &EncodeConfig) -> crate::error::Result<Canvas> {
    let img = image::open(path)?.to_rgb8();
    let size = config.canvas_size;
    let img = if img.width() == size && img.height() == size {
        img
    } else {
        image::imageops::resize(&img, size, size, image::imageops::FilterType::Triangle)
    };
    Ok(Canvas::from_rgb_bytes(size, size, img.into_raw(), WHITE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "clinical")]
    Clinical,
    #[serde(rename = "meds")]
    Medications,
    #[serde(rename = "cxr")]
    Cxr,
    #[serde(rename = "ecg")]
    Ecg,
}

impl Modality {
    /// Fixed concatenation order for late fusion: C, M, X, E.
    pub const FUSION_ORDER: [Modality; 4] = [Modality::Clinical, Modality::Medications, Modality::Cxr, Modality::Ecg];

    pub fn file_tag(self) -> &'static str {
        match self {
            Modality::Clinical => "clinical",
            Modality::Medications => "meds",
            Modality::Cxr => "cxr",
            Modality::Ecg => "ecg",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Modality::Clinical => 'C',
            Modality::Medications => 'M',
            Modality::Cxr => 'X',
            Modality::Ecg => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::FUSION_ORDER.into_iter().find(|m| m.letter() == c.to_ascii_uppercase())
    }
}
