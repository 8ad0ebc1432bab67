//! Cumulative-dose step curves, one panel per medication category.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, Rect, WHITE};
use super::clinical::time_to_x;
use super::layout::{layout_grid, panel_rects};
use super::raster::rasterize_polyline;
use super::EncodeConfig;
use crate::catalog::{MedicationCatalog, MEDICATION_CATEGORIES};
use crate::error::{Error, Result};
use crate::ingest::MedicationEvent;

/// Percentile used to clip per-patient cumulative doses.
pub const CLIP_PERCENTILE: f64 = 0.95;

/// Cumulative dose as a step series `(time_h, cumulative)`.
///
/// Events at the same timestamp are summed into a single step; events after
/// `window_h` are ignored.
pub fn cumulative_dose_curve(events: &[&MedicationEvent], window_h: f64) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = events
        .iter()
        .filter(|e| e.time_h <= window_h)
        .map(|e| (e.time_h, e.dose))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    let mut total = 0.0;
    for (t, dose) in sorted {
        total += dose;
        match curve.last_mut() {
            Some(last) if last.0 == t => last.1 = total,
            _ => curve.push((t, total)),
        }
    }
    curve
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile_linear(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseScale {
    pub clip_value: f64,
    pub max_value: f64,
}

impl DoseScale {
    /// Normalized height in `[0, 1]` of a cumulative dose.
    pub fn normalize(&self, cumulative: f64) -> f64 {
        (cumulative.min(self.clip_value) / self.max_value).clamp(0.0, 1.0)
    }
}

/// Clip value and normalizer from per-patient final cumulative doses.
///
/// Patients who never received the drug do not enter the percentile; if
/// nobody did, the drug is inactive (`None`).
pub fn clip_and_normalize_doses(finals: &[f64]) -> Option<DoseScale> {
    let given: Vec<f64> = finals.iter().copied().filter(|&f| f > 0.0).collect();
    let clip_value = percentile_linear(&given, CLIP_PERCENTILE)?;
    let max_value = given.iter().map(|&f| f.min(clip_value)).fold(0.0, f64::max);
    (max_value > 0.0).then_some(DoseScale { clip_value, max_value })
}

/// Frozen per-drug scales, fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationStats {
    pub split_seed: u64,
    pub provenance: String,
    pub drugs: BTreeMap<String, DoseScale>,
}

impl MedicationStats {
    /// Fits scales from the medication events of the given (training) stays.
    pub fn fit<'a>(
        stays: impl IntoIterator<Item = &'a [MedicationEvent]>,
        catalog: &MedicationCatalog,
        window_h: f64,
        split_seed: u64,
        provenance: String,
    ) -> Self {
        let mut finals: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for events in stays {
            let mut per_drug: BTreeMap<&str, Vec<&MedicationEvent>> = BTreeMap::new();
            for e in events {
                per_drug.entry(e.drug_name.as_str()).or_default().push(e);
            }
            for (drug, evs) in per_drug {
                if let Some(&(_, last)) = cumulative_dose_curve(&evs, window_h).last() {
                    finals.entry(drug).or_default().push(last);
                }
            }
        }
        let drugs = catalog
            .medications
            .iter()
            .filter_map(|m| {
                let f = finals.get(m.drug_name.as_str())?;
                clip_and_normalize_doses(f).map(|s| (m.drug_name.clone(), s))
            })
            .collect();
        MedicationStats { split_seed, provenance, drugs }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Category panel rectangles in category order.
pub fn medication_panels(config: &EncodeConfig) -> Result<Vec<Rect>> {
    let (rows, cols) = layout_grid(MEDICATION_CATEGORIES.len())?;
    Ok(panel_rects(config.canvas_size, config.canvas_size, rows, cols, config.margin))
}

pub fn dose_to_y(fraction: f64, panel: &Rect) -> i64 {
    panel.y0 + ((1.0 - fraction.clamp(0.0, 1.0)) * (panel.height() - 1) as f64).round() as i64
}

pub fn render_medications(
    events: &[MedicationEvent],
    catalog: &MedicationCatalog,
    stats: &MedicationStats,
    config: &EncodeConfig,
) -> Result<Canvas> {
    let panels = medication_panels(config)?;
    let (_, cols) = layout_grid(MEDICATION_CATEGORIES.len())?;
    let mut per_drug: BTreeMap<usize, Vec<&MedicationEvent>> = BTreeMap::new();
    for e in events {
        let idx = catalog
            .index_of(&e.drug_name)
            .ok_or_else(|| Error::UnknownCatalogEntry(e.drug_name.clone()))?;
        per_drug.entry(idx).or_default().push(e);
    }
    let mut canvas = Canvas::new(config.canvas_size, config.canvas_size, WHITE);
    // catalog order fixes overdraw order within a category
    for (idx, evs) in per_drug {
        let spec = &catalog.medications[idx];
        let Some(scale) = stats.drugs.get(&spec.drug_name) else {
            continue;
        };
        let curve = cumulative_dose_curve(&evs, config.window_h);
        let Some(&(t_first, _)) = curve.first() else {
            continue;
        };
        let (r, c) = spec.category_cell;
        let panel = &panels[r * cols + c];
        let mut points = vec![(time_to_x(t_first, config.window_h, panel), dose_to_y(0.0, panel))];
        let mut level = 0.0;
        for &(t, cum) in &curve {
            let x = time_to_x(t, config.window_h, panel);
            points.push((x, dose_to_y(level, panel)));
            level = scale.normalize(cum);
            points.push((x, dose_to_y(level, panel)));
        }
        points.push((time_to_x(config.window_h, config.window_h, panel), dose_to_y(level, panel)));
        points.dedup();
        if points.len() == 1 {
            points.push(points[0]);
        }
        rasterize_polyline(&mut canvas, &points, spec.color, panel);
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(drug: &str, t: f64, dose: f64) -> MedicationEvent {
        MedicationEvent { stay_id: "s".into(), drug_name: drug.into(), time_h: t, dose }
    }

    #[test]
    fn cumulative_sums() {
        let e = [ev("Propofol", 5.0, 3.0), ev("Propofol", 1.0, 2.0)];
        let refs: Vec<_> = e.iter().collect();
        assert_eq!(cumulative_dose_curve(&refs, 48.0), vec![(1.0, 2.0), (5.0, 5.0)]);
        assert!(cumulative_dose_curve(&[], 48.0).is_empty());
    }

    #[test]
    fn same_time_doses_aggregate() {
        let e = [ev("Propofol", 2.0, 1.0), ev("Propofol", 2.0, 4.0)];
        let refs: Vec<_> = e.iter().collect();
        let curve = cumulative_dose_curve(&refs, 48.0);
        // oracle: sum of all doses with time <= t
        for &(t, c) in &curve {
            let direct: f64 = e.iter().filter(|x| x.time_h <= t).map(|x| x.dose).sum();
            assert_eq!(c, direct);
        }
        assert_eq!(curve, vec![(2.0, 5.0)]);
    }

    #[test]
    fn percentile_matches_brute_force() {
        let finals: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = clip_and_normalize_doses(&finals).unwrap();
        // brute force: rank 0.95*99 = 94.05 between sorted[94]=95 and sorted[95]=96
        let sorted = finals.clone();
        let rank = 0.95 * 99.0;
        let oracle = sorted[94] + (sorted[95] - sorted[94]) * (rank - 94.0);
        assert!((s.clip_value - oracle).abs() < 1e-12);
        assert!((s.clip_value - 95.05).abs() < 1e-9);
        assert_eq!(s.max_value, s.clip_value);
        assert_eq!(s.normalize(120.0), 1.0);
    }

    #[test]
    fn single_and_constant_finals() {
        let s = clip_and_normalize_doses(&[10.0]).unwrap();
        assert_eq!((s.clip_value, s.max_value, s.normalize(10.0)), (10.0, 10.0, 1.0));
        let s = clip_and_normalize_doses(&[5.0; 7]).unwrap();
        assert_eq!(s.normalize(5.0), 1.0);
        assert!(clip_and_normalize_doses(&[0.0, 0.0]).is_none());
        assert!(clip_and_normalize_doses(&[]).is_none());
    }

    fn stats_for(drugs: &[(&str, f64)]) -> MedicationStats {
        MedicationStats {
            split_seed: 0,
            provenance: String::new(),
            drugs: drugs
                .iter()
                .map(|&(d, v)| (d.to_string(), DoseScale { clip_value: v, max_value: v }))
                .collect(),
        }
    }

    #[test]
    fn no_medications_is_blank() {
        let c = render_medications(&[], &MedicationCatalog::standard(), &stats_for(&[]), &EncodeConfig::default()).unwrap();
        assert_eq!(c.count_non_background(), 0);
    }

    #[test]
    fn propofol_step_in_sedatives_cell() {
        let cat = MedicationCatalog::standard();
        let cfg = EncodeConfig::default();
        let c = render_medications(&[ev("Propofol", 10.0, 100.0)], &cat, &stats_for(&[("Propofol", 200.0)]), &cfg).unwrap();
        let panels = medication_panels(&cfg).unwrap();
        let sed = &panels[7];
        let color = cat.get("Propofol").unwrap().color;
        let mut n = 0;
        for y in 0..c.height() {
            for x in 0..c.width() {
                if c.get(x, y) != WHITE {
                    assert!(sed.contains(x as i64, y as i64));
                    assert_eq!(c.get(x, y), color);
                    n += 1;
                }
            }
        }
        assert!(n > 0);
        // the step reaches half height after t=10h
        let x_end = (sed.x1 - 1) as u32;
        assert_eq!(c.get(x_end, dose_to_y(0.5, sed) as u32), color);
    }

    #[test]
    fn two_drugs_two_colors_one_cell() {
        let cat = MedicationCatalog::standard();
        let cfg = EncodeConfig::default();
        let events = [ev("Propofol", 5.0, 10.0), ev("Ketamine", 20.0, 10.0)];
        let c = render_medications(&events, &cat, &stats_for(&[("Propofol", 20.0), ("Ketamine", 40.0)]), &cfg).unwrap();
        let mut colors = std::collections::BTreeSet::new();
        for y in 0..c.height() {
            for x in 0..c.width() {
                if c.get(x, y) != WHITE {
                    colors.insert(c.get(x, y));
                }
            }
        }
        assert_eq!(colors.len(), 2);
    }

    #[test]
    fn inactive_drug_not_drawn() {
        let c = render_medications(
            &[ev("Propofol", 5.0, 10.0)],
            &MedicationCatalog::standard(),
            &stats_for(&[]),
            &EncodeConfig::default(),
        )
        .unwrap();
        assert_eq!(c.count_non_background(), 0);
    }
}
