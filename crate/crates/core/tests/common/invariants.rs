//! Randomized invariants of the renderers, attention and tokenizer.
//! Each check runs its own proptest runner for [`CASES`] generated inputs.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use modimg::catalog::{ClinicalCatalog, MedicationCatalog};
use modimg::encode::clinical::clinical_panels;
use modimg::encode::meds::medication_panels;
use modimg::encode::{
    clip_and_normalize_doses, cumulative_dose_curve, draw_marker, rasterize_polyline, render_clinical,
    render_medications, Canvas, EncodeConfig, MedicationStats, Rect, WHITE,
};
use modimg::ingest::{EventSeries, MedicationEvent, Observation};
use modimg::model::attention::mha_forward;
use modimg::model::{masked_softmax, AttentionMask};
use modimg::text::{tokenize, BpeModel, CLS_ID, CONTEXT_LENGTH, PAD_ID};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub const CASES: u32 = 1000;

/// Every invariant by name.
pub const ALL: [(&str, fn() -> Result<(), String>); 9] = [
    ("cumulative dose curve never decreases", cumulative_curve_never_decreases),
    ("rendered dose curve only rises", rendered_dose_curve_only_rises),
    ("medication ink stays inside its panel", medication_ink_stays_inside_its_panel),
    ("clinical ink stays inside its panel", clinical_ink_stays_inside_its_panel),
    ("primitives respect the clip rect", primitives_respect_the_clip_rect),
    ("softmax rows sum to one", softmax_rows_sum_to_one),
    ("multi-head weights sum to one", multi_head_weights_sum_to_one),
    ("bpe round-trips arbitrary text", bpe_round_trips_arbitrary_text),
    ("tokenize is bounded and CLS-led", tokenize_is_bounded_and_cls_led),
];

fn run<S: Strategy>(strategy: S, check: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    TestRunner::new(Config::with_cases(CASES)).run(&strategy, check).map_err(|e| e.to_string())
}

fn small_config() -> EncodeConfig {
    EncodeConfig { canvas_size: 96, ..EncodeConfig::default() }
}

fn ev(drug: &str, t: f64, dose: f64) -> MedicationEvent {
    MedicationEvent { stay_id: "s".into(), drug_name: drug.into(), time_h: t, dose }
}

fn clinical_catalog() -> &'static ClinicalCatalog {
    static CAT: OnceLock<ClinicalCatalog> = OnceLock::new();
    CAT.get_or_init(ClinicalCatalog::standard)
}

fn medication_catalog() -> &'static MedicationCatalog {
    static CAT: OnceLock<MedicationCatalog> = OnceLock::new();
    CAT.get_or_init(MedicationCatalog::standard)
}

fn bpe() -> &'static BpeModel {
    static MODEL: OnceLock<BpeModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let corpus: Vec<String> = [
            "Patient Demographics: age 67, gender F. Chief Complaint: chest pain.",
            "Past Medical History: hypertension, diabetes, atrial fibrillation.",
            "Admission: emergency room, insurance Medicare, language English.",
            "Medications prior to admission: metoprolol, insulin, furosemide.",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        BpeModel::train(&corpus, 400).unwrap()
    })
}

/// Pixels that differ from the background.
fn inked(canvas: &Canvas) -> impl Iterator<Item = (i64, i64)> + '_ {
    (0..canvas.height()).flat_map(move |y| {
        (0..canvas.width()).filter(move |&x| canvas.get(x, y) != WHITE).map(move |x| (x as i64, y as i64))
    })
}

pub fn cumulative_curve_never_decreases() -> Result<(), String> {
    run(prop::collection::vec((0.0f64..60.0, 0.0f64..100.0), 0..12), |events| {
        let evs: Vec<MedicationEvent> = events.iter().map(|&(t, d)| ev("Propofol", t, d)).collect();
        let refs: Vec<&MedicationEvent> = evs.iter().collect();
        let curve = cumulative_dose_curve(&refs, 48.0);
        for w in curve.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            prop_assert!(w[0].1 <= w[1].1);
        }
        prop_assert!(curve.iter().all(|&(t, _)| t <= 48.0));
        Ok(())
    })
}

/// A single drug drawn alone: its topmost pixel per column never moves down.
pub fn rendered_dose_curve_only_rises() -> Result<(), String> {
    let strategy = (
        0usize..20,
        prop::collection::vec((0.0f64..48.0, 0.01f64..50.0), 1..10),
        prop::collection::vec(0.01f64..200.0, 0..20),
    );
    run(strategy, |(drug, events, others)| {
        let catalog = medication_catalog();
        let spec = &catalog.medications[drug % catalog.len()];
        let evs: Vec<MedicationEvent> = events.iter().map(|&(t, d)| ev(&spec.drug_name, t, d)).collect();
        let mut finals = others;
        finals.push(events.iter().map(|e| e.1).sum());
        let scale = clip_and_normalize_doses(&finals).unwrap();
        let stats = MedicationStats {
            split_seed: 0,
            provenance: "test".into(),
            drugs: BTreeMap::from([(spec.drug_name.clone(), scale)]),
        };
        let canvas = render_medications(&evs, catalog, &stats, &small_config()).unwrap();
        // a higher curve means a smaller y
        let mut tops: BTreeMap<i64, i64> = BTreeMap::new();
        for (x, y) in inked(&canvas) {
            prop_assert_eq!(canvas.get(x as u32, y as u32), spec.color);
            tops.entry(x).and_modify(|t| *t = (*t).min(y)).or_insert(y);
        }
        prop_assert!(!tops.is_empty());
        let ys: Vec<i64> = tops.values().copied().collect();
        for w in ys.windows(2) {
            prop_assert!(w[1] <= w[0], "curve went down: {:?}", ys);
        }
        Ok(())
    })
}

pub fn medication_ink_stays_inside_its_panel() -> Result<(), String> {
    run(prop::collection::vec((0usize..40, -5.0f64..60.0, 0.0f64..80.0), 0..25), |events| {
        let catalog = medication_catalog();
        let evs: Vec<MedicationEvent> = events
            .iter()
            .map(|&(d, t, dose)| ev(&catalog.medications[d % catalog.len()].drug_name, t, dose))
            .collect();
        let drugs = catalog
            .medications
            .iter()
            .map(|m| (m.drug_name.clone(), clip_and_normalize_doses(&[1.0, 5.0, 20.0]).unwrap()))
            .collect();
        let stats = MedicationStats { split_seed: 0, provenance: "test".into(), drugs };
        let cfg = small_config();
        let panels = medication_panels(&cfg).unwrap();
        let canvas = render_medications(&evs, catalog, &stats, &cfg).unwrap();
        for (x, y) in inked(&canvas) {
            prop_assert!(panels.iter().any(|p| p.contains(x, y)), "pixel ({x}, {y}) outside panels");
        }
        Ok(())
    })
}

pub fn clinical_ink_stays_inside_its_panel() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((0usize..64, prop::collection::vec((-10.0f64..70.0, -1e4f64..1e4), 0..8)), 0..8),
        any::<bool>(),
    );
    run(strategy, |(series, markers)| {
        let catalog = clinical_catalog();
        let mut by_var: BTreeMap<usize, Vec<Observation>> = BTreeMap::new();
        for (v, obs) in series {
            let mut obs: Vec<Observation> = obs.into_iter().map(|(time_h, value)| Observation { time_h, value }).collect();
            obs.sort_by(|a, b| a.time_h.total_cmp(&b.time_h));
            by_var.insert(v % catalog.len(), obs);
        }
        let input: Vec<EventSeries> = by_var
            .into_iter()
            .map(|(v, observations)| EventSeries {
                stay_id: "s".into(),
                variable_id: catalog.variables[v].variable_id.clone(),
                observations,
            })
            .collect();
        let cfg = EncodeConfig { markers, ..small_config() };
        let panels = clinical_panels(catalog, &cfg).unwrap();
        let canvas = render_clinical(&input, catalog, &cfg).unwrap();
        for (x, y) in inked(&canvas) {
            prop_assert!(panels.iter().any(|p| p.contains(x, y)), "pixel ({x}, {y}) outside panels");
        }
        Ok(())
    })
}

pub fn primitives_respect_the_clip_rect() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((-40i64..140, -40i64..140), 1..6),
        (0i64..60, 0i64..60),
        (1i64..40, 1i64..40),
    );
    run(strategy, |(pts, corner, size)| {
        let clip = Rect::new(corner.0, corner.1, corner.0 + size.0, corner.1 + size.1);
        let mut canvas = Canvas::new(100, 100, WHITE);
        rasterize_polyline(&mut canvas, &pts, [0, 0, 255], &clip);
        for &p in &pts {
            draw_marker(&mut canvas, p, [0, 128, 0], &clip);
        }
        for (x, y) in inked(&canvas) {
            prop_assert!(clip.contains(x, y), "pixel ({x}, {y}) outside {clip:?}");
        }
        Ok(())
    })
}

pub fn softmax_rows_sum_to_one() -> Result<(), String> {
    let strategy = (1usize..12, prop::collection::vec(-50.0f64..50.0, 144), prop::collection::vec(any::<bool>(), 12));
    run(strategy, |(n, scores, keep)| {
        let mut valid = keep[..n].to_vec();
        valid[0] = true;
        let mask = AttentionMask::key_padding(&valid);
        let mut scores = scores[..n * n].to_vec();
        masked_softmax(&mut scores, n, Some(&mask));
        for (i, row) in scores.chunks(n).enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6, "row {i}: {row:?}");
            for (j, &v) in row.iter().enumerate() {
                prop_assert!(v >= 0.0);
                if !valid[j] {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
        Ok(())
    })
}

pub fn multi_head_weights_sum_to_one() -> Result<(), String> {
    let strategy = (2usize..10, 1usize..4, prop::collection::vec(-3.0f64..3.0, 10 * 3 * 12), any::<bool>());
    run(strategy, |(n, heads, qkv, windowed)| {
        let d = 4 * heads;
        // a windowed mask needs a square patch grid plus CLS
        let (n, mask) = if windowed { (5, AttentionMask::windowed(2, 1, 0).unwrap()) } else { (n, AttentionMask::full(n)) };
        let (out, probs) = mha_forward(&qkv[..n * 3 * d], n, d, heads, Some(&mask));
        prop_assert_eq!(out.len(), n * d);
        prop_assert_eq!(probs.len(), heads);
        for p in &probs {
            for (i, row) in p.chunks(n).enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                for (j, &v) in row.iter().enumerate() {
                    if !mask.allowed(i, j) {
                        prop_assert_eq!(v, 0.0);
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn bpe_round_trips_arbitrary_text() -> Result<(), String> {
    run("\\PC{0,120}", |text| {
        let model = bpe();
        let ids = model.encode(&text);
        prop_assert_eq!(model.decode_bytes(&ids), text.as_bytes());
        if ids.len() < CONTEXT_LENGTH {
            let seq = tokenize(&text, model, CONTEXT_LENGTH);
            let n = seq.len_unpadded();
            prop_assert_eq!(n, ids.len() + 1);
            prop_assert_eq!(model.decode_bytes(&seq.ids[1..n]), text.as_bytes());
        }
        Ok(())
    })
}

pub fn tokenize_is_bounded_and_cls_led() -> Result<(), String> {
    run(("[ -~]{0,1500}", 1usize..=CONTEXT_LENGTH), |(text, ctx)| {
        let seq = tokenize(&text, bpe(), ctx);
        prop_assert_eq!(seq.ids.len(), ctx);
        prop_assert!(seq.ids.len() <= CONTEXT_LENGTH);
        prop_assert_eq!(seq.ids[0], CLS_ID);
        let n = seq.len_unpadded();
        prop_assert!(seq.ids[n..].iter().all(|&i| i == PAD_ID));
        prop_assert!(seq.ids[1..n].iter().all(|&i| i != CLS_ID && i != PAD_ID));
        Ok(())
    })
}
