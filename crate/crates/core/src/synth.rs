//! Seeded synthetic cohorts with planted, analyzable label signals.
//!
//! Every planted channel is driven by one standard-normal latent per stay.
//! The realized summary statistic of that channel (what an image-based model
//! can actually see) is written to a sidecar next to the true weights, so the
//! best achievable AUROC can be computed exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::catalog::{ClinicalCatalog, MedicationCatalog, ECG_LEADS, PHENOTYPES, PHENOTYPE_PREVALENCE};
use crate::encode::{Canvas, WHITE};
use crate::error::{Error, Result};
use crate::ingest::{
    write_cxr_manifest, write_ecg, write_ecg_manifest, write_events, write_medications, write_metadata, write_stays, CxrRef,
    EcgRecord, EcgRef, EventSeries, MedicationEvent, Observation, PatientMetadata, StayRecord,
};
use crate::metrics::{auroc, ScoredSet};

/// Where a planted signal lives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    /// Mean standardized value of one clinical variable.
    Clinical(String),
    /// Total dose of one drug, affinely standardized.
    Medication(String),
    /// Mean brightness of the chest X-ray.
    Cxr,
    /// Heart rate of the ECG.
    Ecg,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Clinical(v) => write!(f, "clinical:{v}"),
            Channel::Medication(d) => write!(f, "meds:{d}"),
            Channel::Cxr => f.write_str("cxr"),
            Channel::Ecg => f.write_str("ecg"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("clinical", v)) => Ok(Channel::Clinical(v.to_string())),
            Some(("meds", d)) => Ok(Channel::Medication(d.to_string())),
            None if s == "cxr" => Ok(Channel::Cxr),
            None if s == "ecg" => Ok(Channel::Ecg),
            _ => Err(Error::Config(format!("unknown signal channel {s:?}"))),
        }
    }
}

impl Serialize for Channel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTerm {
    pub channel: Channel,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLink {
    /// `Bernoulli(sigmoid(score))`.
    Logistic,
    /// `score > 0`, deterministic before flip noise.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_stays: usize,
    pub seed: u64,
    /// Expected observations per variable over the window.
    pub event_rate: f64,
    /// Per-variable overrides of `event_rate`.
    pub event_rates: BTreeMap<String, f64>,
    pub signal: Vec<SignalTerm>,
    pub bias: f64,
    pub link: LabelLink,
    pub label_noise: f64,
    pub ecg_missing_rate: f64,
    /// Fraction of stays shorter than the window (exercise the exclusion rule).
    pub short_stay_rate: f64,
    /// Chance that any non-signal drug is given to a stay.
    pub drug_rate: f64,
    pub cxr_size: u32,
    pub ecg_sample_rate_hz: u32,
    pub ecg_duration_s: f64,
    pub window_h: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_stays: 200,
            seed: 0,
            event_rate: 6.0,
            event_rates: BTreeMap::new(),
            signal: vec![SignalTerm { channel: Channel::Clinical("Heart Rate".into()), weight: 3.0 }],
            bias: 0.0,
            link: LabelLink::Logistic,
            label_noise: 0.1,
            ecg_missing_rate: 0.44,
            short_stay_rate: 0.0,
            drug_rate: 0.08,
            cxr_size: 64,
            ecg_sample_rate_hz: 250,
            ecg_duration_s: 6.0,
            window_h: 48.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self, clinical: &ClinicalCatalog, meds: &MedicationCatalog) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_stays == 0 {
            return bad("n_stays must be positive".into());
        }
        if !(self.event_rate > 0.0) || self.event_rates.values().any(|r| !(*r > 0.0)) {
            return bad("event rates must be positive".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label_noise {} must lie in [0, 0.5)", self.label_noise));
        }
        for (name, p) in [("ecg_missing_rate", self.ecg_missing_rate), ("short_stay_rate", self.short_stay_rate), ("drug_rate", self.drug_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} must lie in [0, 1]"));
            }
        }
        if self.cxr_size < 8 || self.ecg_sample_rate_hz == 0 || !(self.ecg_duration_s > 0.0) || !(self.window_h > 0.0) {
            return bad("cxr_size, ECG sampling and window must be positive".into());
        }
        for t in &self.signal {
            match &t.channel {
                Channel::Clinical(v) if clinical.get(v).is_none() => return bad(format!("unknown variable {v:?} in signal")),
                Channel::Medication(d) if meds.get(d).is_none() => return bad(format!("unknown drug {d:?} in signal")),
                _ => {}
            }
            if !t.weight.is_finite() {
                return bad("signal weights must be finite".into());
            }
        }
        Ok(())
    }
}

/// Per-stay ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayTruth {
    pub stay_id: String,
    /// Latent driver per signal term.
    pub latents: Vec<f64>,
    /// Realized statistic per signal term.
    pub stats: Vec<f64>,
    pub score: f64,
    pub clean_label: u8,
    pub label: u8,
    pub has_ecg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: SynthSpec,
    pub weights: Vec<f64>,
    pub stays: Vec<StayTruth>,
}

impl Sidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub const SIDECAR_FILE: &str = "truth.json";

/// Std of per-observation noise around a planted clinical level, in z units.
const OBS_NOISE: f64 = 0.35;
/// Planted drug totals are `base · (MED_CENTER + MED_SLOPE · u)`.
const MED_CENTER: f64 = 2.0;
const MED_SLOPE: f64 = 0.6;
/// Fraction of the window over which a planted drug is administered.
const PLANTED_DOSE_SPAN: f64 = 0.25;
const MED_BASE: f64 = 100.0;
/// Mean CXR gray level is `CXR_MID + CXR_SLOPE · u`.
const CXR_MID: f64 = 128.0;
const CXR_SLOPE: f64 = 30.0;

const SEXES: [&str; 2] = ["female", "male"];
const ETHNICITIES: [&str; 5] = ["white", "black", "hispanic", "asian", "other"];
const INSURANCE: [&str; 3] = ["medicare", "medicaid", "other"];
const FINDINGS: [&str; 4] = ["no acute process", "mild bibasilar atelectasis", "small left effusion", "lines and tubes in place"];
const IMPRESSIONS: [&str; 3] = ["stable", "no pneumothorax", "interval improvement"];

struct StayData {
    stay: StayRecord,
    series: Vec<EventSeries>,
    meds: Vec<MedicationEvent>,
    cxr_images: Vec<(String, Canvas)>,
    ecg: Option<(EcgRef, EcgRecord)>,
    metadata: PatientMetadata,
    truth: StayTruth,
}

/// Writes a complete input file set under `out` and returns the sidecar.
pub fn generate_synthetic(spec: &SynthSpec, out: &Path) -> Result<Sidecar> {
    let clinical = ClinicalCatalog::standard();
    let medcat = MedicationCatalog::standard();
    spec.validate(&clinical, &medcat)?;
    for sub in ["cxr", "ecg"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = (spec.n_stays.max(1) as f64).log10().floor() as usize + 1;
    let stays: Vec<StayData> = (0..spec.n_stays)
        .map(|i| generate_stay(spec, &clinical, &medcat, &format!("s{:0width$}", i + 1), &mut rng))
        .collect::<Result<_>>()?;

    write_events(&out.join("events.csv"), stays.iter().flat_map(|s| &s.series))?;
    write_medications(&out.join("meds.csv"), stays.iter().flat_map(|s| &s.meds))?;
    write_stays(&out.join("stays.csv"), stays.iter().map(|s| &s.stay))?;
    write_cxr_manifest(
        &out.join("cxr_manifest.csv"),
        stays.iter().flat_map(|s| s.stay.cxr_refs.iter().map(move |r| (s.stay.stay_id.as_str(), r))),
    )?;
    write_ecg_manifest(
        &out.join("ecg_manifest.csv"),
        stays.iter().filter_map(|s| s.ecg.as_ref().map(|(r, _)| (s.stay.stay_id.as_str(), r))),
    )?;
    write_metadata(&out.join("metadata.jsonl"), stays.iter().map(|s| &s.metadata))?;
    for s in &stays {
        for (rel, img) in &s.cxr_images {
            img.save_png(&out.join(rel))?;
        }
        if let Some((r, rec)) = &s.ecg {
            write_ecg(rec, &out.join(&r.header_path), &out.join(&r.data_path))?;
        }
    }
    let sidecar = Sidecar {
        spec: spec.clone(),
        weights: spec.signal.iter().map(|t| t.weight).collect(),
        stays: stays.into_iter().map(|s| s.truth).collect(),
    };
    let path = out.join(SIDECAR_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))?;
    Ok(sidecar)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

fn generate_stay(spec: &SynthSpec, clinical: &ClinicalCatalog, medcat: &MedicationCatalog, id: &str, rng: &mut ChaCha8Rng) -> Result<StayData> {
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let w = spec.window_h;
    let latents: Vec<f64> = spec.signal.iter().map(|_| std_normal.sample(rng)).collect();
    let planted = |ch: &Channel| spec.signal.iter().position(|t| &t.channel == ch);
    let mut stats = vec![0.0; spec.signal.len()];

    let los = if rng.random_bool(spec.short_stay_rate) {
        rng.random_range(w * 0.2..w * 0.99)
    } else {
        w + rng.random_range(0.0..2.0 * w)
    };
    let horizon = los.min(w * 1.25);

    // clinical measurements
    let mut series = Vec::new();
    for var in &clinical.variables {
        let ch = Channel::Clinical(var.variable_id.clone());
        let term = planted(&ch);
        let rate = spec.event_rates.get(&var.variable_id).copied().unwrap_or(spec.event_rate);
        let mut n = poisson(rng, rate);
        if term.is_some() {
            n = n.max(2);
        }
        let level = match term {
            Some(k) => latents[k],
            None => 0.7 * std_normal.sample(rng),
        };
        let mut obs: Vec<Observation> = (0..n)
            .map(|j| {
                // planted series keep their first two readings inside the window
                let t = if term.is_some() && j < 2 { rng.random_range(0.0..w) } else { rng.random_range(0.0..horizon) };
                let z = level + OBS_NOISE * std_normal.sample(rng);
                Observation { time_h: round3(t), value: round3(var.pop_mean + var.pop_std * z) }
            })
            .collect();
        if obs.is_empty() {
            continue;
        }
        obs.sort_by(|a, b| a.time_h.total_cmp(&b.time_h).then(a.value.total_cmp(&b.value)));
        if let Some(k) = term {
            let seen: Vec<f64> = obs.iter().filter(|o| o.time_h <= w).map(|o| (o.value - var.pop_mean) / var.pop_std).collect();
            stats[k] = seen.iter().map(|z| z.clamp(-3.0, 3.0)).sum::<f64>() / seen.len() as f64;
        }
        series.push(EventSeries { stay_id: id.to_string(), variable_id: var.variable_id.clone(), observations: obs });
    }

    // medications
    let mut meds = Vec::new();
    for drug in &medcat.medications {
        let term = planted(&Channel::Medication(drug.drug_name.clone()));
        if term.is_none() && !rng.random_bool(spec.drug_rate) {
            continue;
        }
        let n = 1 + poisson(rng, 3.0);
        let total = match term {
            Some(k) => MED_BASE * (MED_CENTER + MED_SLOPE * latents[k]).max(0.05),
            None => MED_BASE * rng.random_range(0.2..3.0),
        };
        let mut shares: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let sum: f64 = shares.iter().sum();
        shares.iter_mut().for_each(|s| *s *= total / sum);
        // a planted drug is front-loaded so its final level spans most of the panel
        let horizon = if term.is_some() { w * PLANTED_DOSE_SPAN } else { w };
        let mut times: Vec<f64> = (0..n).map(|_| round3(rng.random_range(0.0..horizon))).collect();
        times.sort_by(f64::total_cmp);
        let mut given = 0.0;
        for (t, s) in times.into_iter().zip(shares) {
            let dose = round3(s);
            given += dose;
            meds.push(MedicationEvent { stay_id: id.to_string(), drug_name: drug.drug_name.clone(), time_h: t, dose });
        }
        if let Some(k) = term {
            stats[k] = (given / MED_BASE - MED_CENTER) / MED_SLOPE;
        }
    }

    // chest X-rays; the signal sets the brightness of every image of the stay
    let cxr_term = planted(&Channel::Cxr);
    let cxr_level = cxr_term.map_or_else(|| 0.5 * std_normal.sample(rng), |k| latents[k]);
    let n_cxr = 1 + poisson(rng, 0.8);
    let mut cxr_refs = Vec::new();
    let mut cxr_images = Vec::new();
    let mut brightness = Vec::new();
    for j in 0..n_cxr {
        // the first image is always inside the window
        let t = if j == 0 { rng.random_range(0.0..w) } else { rng.random_range(0.0..horizon) };
        let rel = format!("cxr/{id}_{j}.png");
        let (img, mean) = synthetic_cxr(spec.cxr_size, CXR_MID + CXR_SLOPE * cxr_level, rng);
        cxr_refs.push(CxrRef { time_h: round3(t), image_path: rel.clone() });
        cxr_images.push((rel, img));
        brightness.push((round3(t), mean));
    }
    if let Some(k) = cxr_term {
        let last = brightness.iter().filter(|b| b.0 <= w).max_by(|a, b| a.0.total_cmp(&b.0)).expect("one in-window image");
        stats[k] = (last.1 - CXR_MID) / CXR_SLOPE;
    }

    // ECG
    let ecg_term = planted(&Channel::Ecg);
    let has_ecg = !rng.random_bool(spec.ecg_missing_rate);
    let hr_z = ecg_term.map_or_else(|| 0.7 * std_normal.sample(rng), |k| latents[k]);
    let bpm = (75.0 + 15.0 * hr_z).clamp(35.0, 180.0);
    let ecg = has_ecg.then(|| {
        let rec = synthetic_ecg(id, spec.ecg_sample_rate_hz, spec.ecg_duration_s, bpm, rng);
        let r = EcgRef {
            time_h: round3(rng.random_range(0.0..w)),
            header_path: format!("ecg/{id}.json"),
            data_path: format!("ecg/{id}.bin"),
        };
        (r, rec)
    });
    if let Some(k) = ecg_term {
        stats[k] = (bpm - 75.0) / 15.0;
    }

    // labels
    let score = spec.bias + spec.signal.iter().zip(&stats).map(|(t, s)| t.weight * s).sum::<f64>();
    let clean_label = match spec.link {
        LabelLink::Logistic => u8::from(rng.random_bool(sigmoid(score))),
        LabelLink::Threshold => u8::from(score > 0.0),
    };
    let label = if rng.random_bool(spec.label_noise) { 1 - clean_label } else { clean_label };
    let mut phenotypes: Vec<u8> = PHENOTYPE_PREVALENCE.iter().map(|&p| u8::from(rng.random_bool(p))).collect();
    let logit0 = (PHENOTYPE_PREVALENCE[0] / (1.0 - PHENOTYPE_PREVALENCE[0])).ln();
    phenotypes[0] = u8::from(rng.random_bool(sigmoid(logit0 + 2.0 * (score - spec.bias))));

    let mut medication_names: Vec<String> = meds.iter().map(|m| m.drug_name.clone()).collect();
    medication_names.dedup();
    let metadata = PatientMetadata {
        stay_id: id.to_string(),
        sex: SEXES.choose(rng).expect("non-empty").to_string(),
        age: rng.random_range(18..=91),
        ethnicity: ETHNICITIES.choose(rng).expect("non-empty").to_string(),
        insurance: INSURANCE.choose(rng).expect("non-empty").to_string(),
        cxr_findings: FINDINGS.choose(rng).expect("non-empty").to_string(),
        cxr_impressions: IMPRESSIONS.choose(rng).expect("non-empty").to_string(),
        ecg_machine_measurements: if has_ecg { format!("hr {bpm:.0} bpm") } else { String::new() },
        icd_diagnoses: PHENOTYPES.iter().zip(&phenotypes).filter(|(_, &p)| p == 1).map(|(n, _)| n.to_string()).collect(),
        medication_names,
    };
    let stay = StayRecord {
        stay_id: id.to_string(),
        hadm_id: format!("h{}", &id[1..]),
        icu_los_h: round3(los),
        label_mortality: label,
        label_phenotypes: phenotypes,
        cxr_refs,
        ecg_refs: ecg.iter().map(|(r, _)| r.clone()).collect(),
    };
    let truth = StayTruth { stay_id: id.to_string(), latents, stats, score, clean_label, label, has_ecg };
    Ok(StayData { stay, series, meds, cxr_images, ecg, metadata, truth })
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Gray radiograph-like texture: a bright ellipse (thorax) over a darker
/// field plus smooth stripes (ribs) and pixel noise, shifted to `target` mean.
fn synthetic_cxr(size: u32, target: f64, rng: &mut impl Rng) -> (Canvas, f64) {
    let s = size as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut vals = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f64 + 0.5) / s - 0.5, (y as f64 + 0.5) / s - 0.5);
            let body = if (u / 0.42).powi(2) + (v / 0.48).powi(2) < 1.0 { 25.0 } else { -25.0 };
            let ribs = 8.0 * (v * 40.0 + phase).sin();
            vals.push(body + ribs + rng.random_range(-6.0..6.0));
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let px: Vec<u8> = vals
        .iter()
        .flat_map(|v| {
            let g = (v - mean + target).round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    let realized = px.iter().step_by(3).map(|&g| g as f64).sum::<f64>() / (size * size) as f64;
    (Canvas::from_rgb_bytes(size, size, px, WHITE), realized)
}

fn synthetic_ecg(id: &str, rate: u32, duration_s: f64, bpm: f64, rng: &mut impl Rng) -> EcgRecord {
    let n = (rate as f64 * duration_s).round() as usize;
    let period = 60.0 / bpm;
    let offset = rng.random_range(0.0..period);
    let leads = (0..12)
        .map(|l| {
            let gain = 0.4 + 0.1 * l as f64;
            let sign = if l == 3 { -1.0 } else { 1.0 };
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate as f64 + offset;
                    let ph = (t % period) / period;
                    let qrs = (-((ph - 0.3) / 0.02).powi(2)).exp();
                    let tw = 0.3 * (-((ph - 0.6) / 0.07).powi(2)).exp();
                    let p = 0.15 * (-((ph - 0.12) / 0.04).powi(2)).exp();
                    let noise: f64 = rng.random_range(-0.02..0.02);
                    (sign * gain * (qrs + tw + p) + noise) as f32 as f64
                })
                .collect()
        })
        .collect();
    EcgRecord {
        stay_id: id.to_string(),
        sample_rate_hz: rate,
        lead_names: ECG_LEADS.iter().map(|s| s.to_string()).collect(),
        leads,
    }
}

/// AUROC of the true linear score against the realized (noisy) labels.
pub fn oracle_auroc(sidecar: &Sidecar) -> Result<f64> {
    let scores: Vec<f64> = sidecar.stays.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = sidecar.stays.iter().map(|s| s.label).collect();
    auroc(&ScoredSet::new(&scores, &labels)?)
}

/// Oracle restricted to a subset of stays (e.g. one split).
pub fn oracle_auroc_for(sidecar: &Sidecar, stay_ids: &[String]) -> Result<f64> {
    let by_id: BTreeMap<&str, &StayTruth> = sidecar.stays.iter().map(|s| (s.stay_id.as_str(), s)).collect();
    let picked: Vec<&StayTruth> = stay_ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect();
    let scores: Vec<f64> = picked.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = picked.iter().map(|s| s.label).collect();
    auroc(&ScoredSet::new(&scores, &labels)?)
}
