//! Clinical measurement line graphs: one panel per variable on a fixed grid.

use super::canvas::{Canvas, Rect, RED, WHITE};
use super::layout::{layout_grid, panel_rects};
use super::raster::{draw_marker, rasterize_polyline};
use super::EncodeConfig;
use crate::catalog::ClinicalCatalog;
use crate::error::{Error, Result};
use crate::ingest::EventSeries;

/// Standardized values are clipped to `[-Z_LIMIT, Z_LIMIT]` before plotting.
pub const Z_LIMIT: f64 = 3.0;

pub fn time_to_x(time_h: f64, window_h: f64, panel: &Rect) -> i64 {
    let frac = (time_h / window_h).clamp(0.0, 1.0);
    panel.x0 + (frac * (panel.width() - 1) as f64).round() as i64
}

/// Maps a standardized value to a pixel row; larger values sit higher.
pub fn z_to_y(z: f64, panel: &Rect) -> i64 {
    let frac = (Z_LIMIT - z.clamp(-Z_LIMIT, Z_LIMIT)) / (2.0 * Z_LIMIT);
    panel.y0 + (frac * (panel.height() - 1) as f64).round() as i64
}

/// Panel rectangles in catalog order.
pub fn clinical_panels(catalog: &ClinicalCatalog, config: &EncodeConfig) -> Result<Vec<Rect>> {
    let (rows, cols) = layout_grid(catalog.len())?;
    let rects = panel_rects(config.canvas_size, config.canvas_size, rows, cols, config.margin);
    catalog
        .variables
        .iter()
        .map(|v| {
            let (r, c) = v.grid_cell;
            if r >= rows || c >= cols {
                return Err(Error::Validation(format!(
                    "{}: grid cell {:?} outside {rows}×{cols}",
                    v.variable_id, v.grid_cell
                )));
            }
            Ok(rects[r * cols + c])
        })
        .collect()
}

pub fn render_clinical(series: &[EventSeries], catalog: &ClinicalCatalog, config: &EncodeConfig) -> Result<Canvas> {
    let panels = clinical_panels(catalog, config)?;
    let mut by_var: Vec<Option<&EventSeries>> = vec![None; catalog.len()];
    for s in series {
        let idx = catalog
            .index_of(&s.variable_id)
            .ok_or_else(|| Error::UnknownCatalogEntry(s.variable_id.clone()))?;
        by_var[idx] = Some(s);
    }
    let mut canvas = Canvas::new(config.canvas_size, config.canvas_size, WHITE);
    for ((spec, panel), s) in catalog.variables.iter().zip(&panels).zip(by_var) {
        let observations = s.map(|s| s.observations.as_slice()).unwrap_or_default();
        if observations.is_empty() && !config.range_lines_on_empty {
            continue;
        }
        if config.range_lines {
            for bound in [spec.normal_lower, spec.normal_upper].into_iter().flatten() {
                let z = (bound - spec.pop_mean) / spec.pop_std;
                if (-Z_LIMIT..=Z_LIMIT).contains(&z) {
                    let y = z_to_y(z, panel);
                    rasterize_polyline(&mut canvas, &[(panel.x0, y), (panel.x1 - 1, y)], RED, panel);
                }
            }
        }
        if observations.is_empty() {
            continue;
        }
        let points = observations
            .iter()
            .map(|o| Ok((time_to_x(o.time_h, config.window_h, panel), z_to_y(spec.standardize(o.value)?, panel))))
            .collect::<Result<Vec<_>>>()?;
        rasterize_polyline(&mut canvas, &points, spec.color, panel);
        if config.markers {
            for &p in &points {
                draw_marker(&mut canvas, p, spec.color, panel);
            }
        }
    }
    Ok(canvas)
}
