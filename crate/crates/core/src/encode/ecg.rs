//! ECG preprocessing (resample, crop, standardize) and 12-strip rendering.

use super::canvas::{Canvas, Rect, WHITE};
use super::raster::bresenham;
use super::EncodeConfig;
use crate::catalog::{hsv_to_rgb, Rgb};
use crate::error::{Error, Result};
use crate::ingest::EcgRecord;

/// Standardized amplitude mapped to the full strip height.
pub const ECG_Z_LIMIT: f64 = 4.0;

/// 12 × n matrix of standardized samples, lead-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgMatrix {
    pub leads: Vec<Vec<f64>>,
}

impl EcgMatrix {
    pub fn n_samples(&self) -> usize {
        self.leads.first().map_or(0, Vec::len)
    }
}

/// Linear-interpolation resampling of one lead from `from_hz` to `to_hz`.
pub fn resample_linear(samples: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    if from_hz == to_hz {
        return samples.to_vec();
    }
    let ratio = from_hz as f64 / to_hz as f64;
    // keep the record's duration; the final input period holds the last sample
    let n_out = ((samples.len() as f64 / ratio).round() as usize).max(1);
    (0..n_out)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 >= samples.len() {
                samples[samples.len() - 1]
            } else {
                samples[i] + (samples[i + 1] - samples[i]) * frac
            }
        })
        .collect()
}

fn standardize(lead: &mut [f64]) {
    let n = lead.len() as f64;
    let mean = lead.iter().sum::<f64>() / n;
    let var = lead.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12) {
        lead.iter_mut().for_each(|v| *v = 0.0);
    } else {
        lead.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Resamples every lead to `target_hz`, keeps the first `duration_s` seconds
/// and z-scores each lead. Constant leads become all zeros.
pub fn preprocess_ecg(record: &EcgRecord, target_hz: u32, duration_s: f64) -> Result<EcgMatrix> {
    if record.leads.len() != 12 {
        return Err(Error::Validation(format!("expected 12 leads, found {}", record.leads.len())));
    }
    let keep = (target_hz as f64 * duration_s).round() as usize;
    let leads = record
        .leads
        .iter()
        .map(|lead| {
            let mut r = resample_linear(lead, record.sample_rate_hz, target_hz);
            if r.len() < keep {
                return Err(Error::Validation(format!(
                    "ECG for {} has {:.3} s after resampling, need {duration_s} s",
                    record.stay_id,
                    r.len() as f64 / target_hz as f64
                )));
            }
            r.truncate(keep);
            standardize(&mut r);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EcgMatrix { leads })
}

/// Fixed per-lead colors.
pub fn lead_colors() -> [Rgb; 12] {
    std::array::from_fn(|i| hsv_to_rgb(360.0 * i as f64 / 12.0 + 15.0, 0.9, if i % 2 == 0 { 0.8 } else { 0.55 }))
}

/// Horizontal strip of each lead, top to bottom.
pub fn lead_strips(config: &EncodeConfig) -> Vec<Rect> {
    let (w, h) = (config.canvas_size as i64, config.canvas_size as i64);
    (0..12).map(|i| Rect::new(0, i * h / 12, w, (i + 1) * h / 12)).collect()
}

fn amplitude_to_y(z: f64, strip: &Rect) -> i64 {
    let frac = (ECG_Z_LIMIT - z.clamp(-ECG_Z_LIMIT, ECG_Z_LIMIT)) / (2.0 * ECG_Z_LIMIT);
    strip.y0 + (frac * (strip.height() - 1) as f64).round() as i64
}

/// Draws each lead in its strip as a per-column min–max envelope.
pub fn render_ecg(matrix: &EcgMatrix, config: &EncodeConfig) -> Result<Canvas> {
    if matrix.leads.len() != 12 {
        return Err(Error::Validation(format!("expected 12 leads, found {}", matrix.leads.len())));
    }
    let mut canvas = Canvas::new(config.canvas_size, config.canvas_size, WHITE);
    let colors = lead_colors();
    let width = config.canvas_size as usize;
    for ((lead, strip), color) in matrix.leads.iter().zip(lead_strips(config)).zip(colors) {
        let n = lead.len();
        if n == 0 {
            continue;
        }
        let mut prev_last: Option<f64> = None;
        for col in 0..width {
            let start = col * n / width;
            let end = ((col + 1) * n / width).max(start + 1).min(n);
            if start >= n {
                break;
            }
            let chunk = &lead[start..end];
            let mut lo = chunk.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if let Some(p) = prev_last {
                lo = lo.min(p);
                hi = hi.max(p);
            }
            prev_last = chunk.last().copied();
            let x = col as i64;
            bresenham((x, amplitude_to_y(hi, &strip)), (x, amplitude_to_y(lo, &strip)), |px, py| {
                canvas.plot(px, py, color, &strip);
            });
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ECG_LEADS;

    fn record(rate: u32, n: usize, f: impl Fn(usize, usize) -> f64) -> EcgRecord {
        EcgRecord {
            stay_id: "s".into(),
            sample_rate_hz: rate,
            lead_names: ECG_LEADS.iter().map(|s| s.to_string()).collect(),
            leads: (0..12).map(|l| (0..n).map(|i| f(l, i)).collect()).collect(),
        }
    }

    #[test]
    fn downsample_thousand_hz() {
        let r = record(1000, 10_000, |l, i| (i as f64 * 0.01 + l as f64).sin());
        let m = preprocess_ecg(&r, 500, 5.0).unwrap();
        assert_eq!(m.leads.len(), 12);
        assert!(m.leads.iter().all(|l| l.len() == 2500));
    }

    #[test]
    fn identity_resample_is_zscore() {
        let r = record(500, 2500, |l, i| ((i * 7 + l) % 13) as f64);
        let m = preprocess_ecg(&r, 500, 5.0).unwrap();
        for (orig, out) in r.leads.iter().zip(&m.leads) {
            let n = orig.len() as f64;
            let mean = orig.iter().sum::<f64>() / n;
            let std = (orig.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            for (a, b) in orig.iter().zip(out) {
                assert!(((a - mean) / std - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_lead_is_zero() {
        let r = record(500, 2500, |l, i| if l == 3 { 7.5 } else { i as f64 });
        let m = preprocess_ecg(&r, 500, 5.0).unwrap();
        assert!(m.leads[3].iter().all(|&v| v == 0.0));
        assert!(m.leads.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn too_short_errors() {
        let r = record(500, 2000, |_, i| i as f64);
        assert!(preprocess_ecg(&r, 500, 5.0).is_err());
    }

    #[test]
    fn resample_preserves_linear_signal() {
        let x: Vec<f64> = (0..100).map(|i| 2.0 * i as f64).collect();
        let y = resample_linear(&x, 250, 500);
        assert_eq!(y.len(), 200);
        for (k, v) in y[..199].iter().enumerate() {
            assert!((v - k as f64).abs() < 1e-12);
        }
        assert_eq!(y[199], 198.0);
    }

    #[test]
    fn zero_matrix_draws_flat_midlines() {
        let cfg = EncodeConfig::default();
        let m = EcgMatrix { leads: vec![vec![0.0; 2500]; 12] };
        let c = render_ecg(&m, &cfg).unwrap();
        assert_eq!(c.count_non_background(), 12 * 384);
        for strip in lead_strips(&cfg) {
            let y = amplitude_to_y(0.0, &strip) as u32;
            assert!((0..384).all(|x| c.get(x, y) != WHITE));
        }
    }

    #[test]
    fn impulse_stays_in_its_strip() {
        let cfg = EncodeConfig::default();
        let mut leads = vec![vec![0.0; 2500]; 12];
        leads[0][1200] = 10.0;
        let c = render_ecg(&EcgMatrix { leads }, &cfg).unwrap();
        let strips = lead_strips(&cfg);
        let base = render_ecg(&EcgMatrix { leads: vec![vec![0.0; 2500]; 12] }, &cfg).unwrap();
        for y in 0..384u32 {
            for x in 0..384u32 {
                if c.get(x, y) != base.get(x, y) {
                    assert!(strips[0].contains(x as i64, y as i64));
                }
            }
        }
        assert_ne!(c, base);
        assert_eq!(c.to_png().unwrap(), render_ecg(&EcgMatrix { leads: c_leads() }, &cfg).unwrap().to_png().unwrap());
        fn c_leads() -> Vec<Vec<f64>> {
            let mut leads = vec![vec![0.0; 2500]; 12];
            leads[0][1200] = 10.0;
            leads
        }
    }
}
