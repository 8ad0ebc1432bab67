//! Input parsing, cohort construction and stratified splitting.

mod cohort;
mod ecg;
mod events;
mod records;
mod split;

use serde::{Deserialize, Serialize};

pub use cohort::{build_cohort, CohortBuild, CohortInstance, Exclusion, DEFAULT_WINDOW_H};
pub use ecg::{parse_ecg, write_ecg, EcgHeader};
pub use events::{parse_events, parse_medications, write_events, write_medications};
pub use records::{
    parse_cxr_manifest, parse_ecg_manifest, parse_metadata, parse_stays, write_cxr_manifest,
    write_ecg_manifest, write_metadata, write_stays,
};
pub use split::{split_stratified, CohortSplit, DEFAULT_FRACTIONS};

pub type StayId = String;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time_h: f64,
    pub value: f64,
}

/// Irregular observations of one variable during one stay, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSeries {
    pub stay_id: StayId,
    pub variable_id: String,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationEvent {
    pub stay_id: StayId,
    pub drug_name: String,
    pub time_h: f64,
    pub dose: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub stay_id: StayId,
    pub sample_rate_hz: u32,
    pub lead_names: Vec<String>,
    /// Twelve equally long channels in `lead_names` order.
    pub leads: Vec<Vec<f64>>,
}

impl EcgRecord {
    pub fn n_samples(&self) -> usize {
        self.leads.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatientMetadata {
    pub stay_id: StayId,
    pub sex: String,
    pub age: u32,
    pub ethnicity: String,
    pub insurance: String,
    #[serde(default)]
    pub cxr_findings: String,
    #[serde(default)]
    pub cxr_impressions: String,
    #[serde(default)]
    pub ecg_machine_measurements: String,
    #[serde(default)]
    pub icd_diagnoses: Vec<String>,
    #[serde(default)]
    pub medication_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CxrRef {
    pub time_h: f64,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRef {
    pub time_h: f64,
    pub header_path: String,
    pub data_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayRecord {
    pub stay_id: StayId,
    pub hadm_id: String,
    pub icu_los_h: f64,
    pub label_mortality: u8,
    pub label_phenotypes: Vec<u8>,
    #[serde(default)]
    pub cxr_refs: Vec<CxrRef>,
    #[serde(default)]
    pub ecg_refs: Vec<EcgRef>,
}

/// A parse result together with non-fatal findings (e.g. unknown catalog keys).
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub data: T,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}
