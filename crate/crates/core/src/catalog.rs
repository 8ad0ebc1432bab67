//! Variable, medication and phenotype catalogs.
//!
//! Catalog order is significant: it fixes the panel each variable or
//! medication category occupies and the color it is drawn with, for every
//! patient. Catalogs round-trip through JSON so the assignment never drifts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encode::layout::layout_grid;
use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub variable_id: String,
    pub display_name: String,
    pub unit: String,
    pub pop_mean: f64,
    pub pop_std: f64,
    pub normal_lower: Option<f64>,
    pub normal_upper: Option<f64>,
    pub grid_cell: (usize, usize),
    pub color: Rgb,
}

impl VariableSpec {
    /// `(x - mean) / std` in population units.
    pub fn standardize(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite value {x} for {}",
                self.variable_id
            )));
        }
        Ok((x - self.pop_mean) / self.pop_std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationSpec {
    pub drug_name: String,
    pub category: String,
    pub unit: String,
    pub color: Rgb,
    pub category_cell: (usize, usize),
}

/// The ten medication categories, in panel order.
pub const MEDICATION_CATEGORIES: [&str; 10] = [
    "Antiarrhythmics",
    "Electrolyte Supplements",
    "Beta-Blockers",
    "Diuretics",
    "Cardiac Glycosides",
    "Insulins",
    "Opioid Analgesics",
    "Sedatives and Anesthetics",
    "Thrombolytics",
    "Vasopressors and Inotropes",
];

/// The 25 phenotype labels, in label-vector order.
pub const PHENOTYPES: [&str; 25] = [
    "Acute and unspecified renal failure",
    "Acute cerebrovascular disease",
    "Acute myocardial infarction",
    "Cardiac dysrhythmias",
    "Chronic kidney disease",
    "COPD and bronchiectasis",
    "Complications of procedures",
    "Conduction disorders",
    "Congestive heart failure",
    "Coronary atherosclerosis",
    "Diabetes w/ complications",
    "Diabetes w/o complication",
    "Disorders of lipid metabolism",
    "Essential hypertension",
    "Fluid and electrolyte disorders",
    "Gastrointestinal hemorrhage",
    "Hypertension w/ complications",
    "Other liver diseases",
    "Other lower respiratory disease",
    "Other upper respiratory disease",
    "Pleurisy; pneumothorax; collapse",
    "Pneumonia (except TB/STI)",
    "Respiratory failure",
    "Septicemia",
    "Shock",
];

/// Training-set prevalence of each phenotype in the reference cohort.
pub const PHENOTYPE_PREVALENCE: [f64; 25] = [
    0.371, 0.099, 0.090, 0.413, 0.250, 0.172, 0.264, 0.111, 0.336, 0.317, 0.119, 0.207, 0.397,
    0.435, 0.512, 0.072, 0.225, 0.179, 0.140, 0.074, 0.113, 0.228, 0.350, 0.265, 0.224,
];

/// Standard 12-lead order.
pub const ECG_LEADS: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

// (id, unit, mean, std, lower, upper). GCS components and PAR-O2 saturation
// have no published population statistics; the values used are typical ICU
// figures.
const VARIABLES: [(&str, &str, f64, f64, f64, f64); 36] = [
    ("Troponin-T", "ng/mL", 0.70, 1.34, 0.00, 0.01),
    ("Potassium (serum)", "mmol/L", 4.08, 0.54, 3.30, 5.10),
    ("Sodium (serum)", "mmol/L", 139.09, 5.05, 133.00, 145.00),
    ("Hemoglobin", "g/dL", 9.90, 1.93, 12.00, 16.00),
    ("Lactic Acid", "mmol/L", 2.52, 2.04, 0.50, 2.00),
    ("Creatinine (serum)", "mg/dL", 1.38, 1.22, 0.40, 1.10),
    ("CK (CPK)", "U/L", 1768.03, 4669.05, f64::NAN, f64::NAN),
    ("Direct Bilirubin", "mg/dL", 3.55, 3.93, 0.00, 0.30),
    ("Total Bilirubin", "mg/dL", 2.12, 3.38, 0.00, 1.50),
    ("CRP", "mg/L", 73.18, 77.64, 0.00, 5.00),
    ("D-Dimer", "ug/mL", 8042.00, 6100.88, 0.00, 0.50),
    ("BUN", "mg/dL", 28.31, 22.58, 7.00, 20.00),
    ("Arterial O2 pressure", "mmHg", 143.81, 81.18, 85.00, 105.00),
    ("Arterial CO2 Pressure", "mmHg", 40.85, 8.94, 35.00, 45.00),
    ("O2 pulseoxymetry", "%", 96.19, 2.24, 95.00, 100.00),
    ("WBC", "cells/uL", 11.71, 5.59, 0.00, 5.00),
    ("BNP", "pg/mL", 6063.74, 9257.13, 0.00, 100.00),
    ("INR", "-", 1.46, 0.54, 0.90, 1.10),
    ("ALT", "U/L", 203.73, 669.92, 0.00, 40.00),
    ("PAP-SYS", "mmHg", 35.89, 8.94, 15.00, 30.00),
    ("PAP-DIA", "mmHg", 18.44, 5.37, 8.00, 15.00),
    ("PAP-MEAN", "mmHg", 25.13, 6.30, 10.00, 20.00),
    ("Heart Rate", "beats/min", 85.75, 17.27, 60.00, 100.00),
    ("GCS-Eye Opening", "-", 3.0, 1.0, 1.00, 4.00),
    ("GCS-Verbal Response", "-", 3.0, 1.8, 1.00, 5.00),
    ("GCS-Motor Response", "-", 5.0, 1.4, 1.00, 6.00),
    ("NIBP-SYS", "mmHg", 119.52, 20.51, 90.00, 120.00),
    ("NIBP-DIA", "mmHg", 65.51, 14.06, 60.00, 80.00),
    ("NIBP-MEAN", "mmHg", 78.85, 14.09, 70.00, 100.00),
    ("Respiratory Rate", "breaths/min", 19.80, 5.14, 12.00, 20.00),
    ("Temperature", "F", 98.51, 1.02, 97.00, 99.50),
    ("Inspired O2 Fraction", "-", 44.90, 10.28, 0.21, 1.00),
    ("PAR-O2 saturation", "%", 96.0, 3.0, 95.00, 100.00),
    ("Glucose (whole blood)", "mg/dL", 139.71, 42.06, 70.00, 105.00),
    ("PH (Venous)", "-", 7.36, 0.09, 7.31, 7.41),
    ("PH (Arterial)", "-", 7.38, 0.08, 7.35, 7.45),
];

// (category index, drug, unit)
const MEDICATIONS: [(usize, &str, &str); 46] = [
    (0, "Amiodarone 600/500", "mg"),
    (0, "Amiodarone", "mg"),
    (0, "Lidocaine", "mg"),
    (0, "Adenosine", "mg"),
    (0, "Procainamide", "mg"),
    (1, "Potassium Chloride", "mEq"),
    (1, "Calcium Gluconate", "g"),
    (1, "Calcium Gluconate (CRRT)", "g"),
    (1, "K Phos", "mmol"),
    (1, "Na Phos", "mmol"),
    (2, "Metoprolol", "mg"),
    (2, "Labetalol", "mg"),
    (2, "Esmolol", "mg"),
    (3, "Furosemide (Lasix)", "mg"),
    (3, "Furosemide (Lasix) 250/50", "mg"),
    (3, "Mannitol", "g"),
    (4, "Digoxin (Lanoxin)", "mg"),
    (5, "Insulin - Regular", "units"),
    (5, "Insulin - Humalog", "units"),
    (5, "Insulin - Glargine", "units"),
    (5, "Insulin - NPH", "units"),
    (5, "Insulin - 70/30", "units"),
    (5, "Insulin - Novolog", "units"),
    (5, "Insulin - Humalog 75/25", "units"),
    (6, "Fentanyl", "mcg"),
    (6, "Fentanyl (Concentrate)", "mg"),
    (6, "Hydromorphone (Dilaudid)", "mg"),
    (6, "Morphine Sulfate", "mg"),
    (6, "Meperidine (Demerol)", "mg"),
    (6, "Methadone Hydrochloride", "mg"),
    (7, "Propofol", "mg"),
    (7, "Midazolam (Versed)", "mg"),
    (7, "Dexmedetomidine (Precedex)", "mcg"),
    (7, "Lorazepam (Ativan)", "mg"),
    (7, "Ketamine", "mg"),
    (7, "Diazepam (Valium)", "mg"),
    (7, "Pentobarbital", "mg"),
    (8, "Alteplase (TPA)", "mg"),
    (9, "Norepinephrine", "mg"),
    (9, "Phenylephrine", "mg"),
    (9, "Epinephrine", "mg"),
    (9, "Dopamine", "mg"),
    (9, "Vasopressin", "units"),
    (9, "Milrinone", "mg"),
    (9, "Dobutamine", "mg"),
    (9, "Isuprel", "mg"),
];

/// HSV (h in degrees, s and v in [0,1]) to 8-bit RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Evenly spaced hues over the full circle, one per index.
fn palette(n: usize) -> Vec<Rgb> {
    (0..n)
        .map(|i| {
            let hue = 360.0 * i as f64 / n as f64;
            // alternate value so neighbouring hues stay distinguishable
            let v = if i % 2 == 0 { 0.85 } else { 0.6 };
            hsv_to_rgb(hue, 0.9, v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalCatalog {
    pub variables: Vec<VariableSpec>,
}

impl ClinicalCatalog {
    /// The 36-variable catalog laid out row-major on a 6×6 grid.
    pub fn standard() -> Self {
        let (_, cols) = layout_grid(VARIABLES.len()).expect("non-empty catalog");
        let colors = palette(VARIABLES.len());
        let variables = VARIABLES
            .iter()
            .enumerate()
            .map(|(i, &(id, unit, mean, std, lo, hi))| VariableSpec {
                variable_id: id.to_string(),
                display_name: id.to_string(),
                unit: unit.to_string(),
                pop_mean: mean,
                pop_std: std,
                normal_lower: lo.is_finite().then_some(lo),
                normal_upper: hi.is_finite().then_some(hi),
                grid_cell: (i / cols, i % cols),
                color: colors[i],
            })
            .collect();
        ClinicalCatalog { variables }
    }

    pub fn get(&self, variable_id: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.variable_id == variable_id)
    }

    pub fn index_of(&self, variable_id: &str) -> Option<usize> {
        self.variables
            .iter()
            .position(|v| v.variable_id == variable_id)
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut cells = std::collections::BTreeSet::new();
        let mut colors = std::collections::BTreeSet::new();
        for v in &self.variables {
            if !(v.pop_std > 0.0) {
                return Err(Error::Validation(format!(
                    "{}: pop_std must be positive",
                    v.variable_id
                )));
            }
            if !cells.insert(v.grid_cell) {
                return Err(Error::Validation(format!(
                    "{}: duplicate grid cell {:?}",
                    v.variable_id, v.grid_cell
                )));
            }
            if !colors.insert(v.color) {
                return Err(Error::Validation(format!(
                    "{}: duplicate color {:?}",
                    v.variable_id, v.color
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let variables: Vec<VariableSpec> = serde_json::from_str(&text)?;
        let catalog = ClinicalCatalog { variables };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.variables)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationCatalog {
    pub medications: Vec<MedicationSpec>,
}

impl MedicationCatalog {
    pub fn standard() -> Self {
        let (_, cols) = layout_grid(MEDICATION_CATEGORIES.len()).expect("ten categories");
        let colors = palette(MEDICATIONS.len());
        let medications = MEDICATIONS
            .iter()
            .enumerate()
            .map(|(i, &(cat, drug, unit))| MedicationSpec {
                drug_name: drug.to_string(),
                category: MEDICATION_CATEGORIES[cat].to_string(),
                unit: unit.to_string(),
                color: colors[i],
                category_cell: (cat / cols, cat % cols),
            })
            .collect();
        MedicationCatalog { medications }
    }

    pub fn get(&self, drug_name: &str) -> Option<&MedicationSpec> {
        self.medications.iter().find(|m| m.drug_name == drug_name)
    }

    pub fn index_of(&self, drug_name: &str) -> Option<usize> {
        self.medications.iter().position(|m| m.drug_name == drug_name)
    }

    pub fn len(&self) -> usize {
        self.medications.len()
    }

    pub fn is_empty(&self) -> bool {
        self.medications.is_empty()
    }

    /// Drugs grouped by category, each in catalog order.
    pub fn by_category(&self) -> BTreeMap<&str, Vec<&MedicationSpec>> {
        let mut out: BTreeMap<&str, Vec<&MedicationSpec>> = BTreeMap::new();
        for m in &self.medications {
            out.entry(m.category.as_str()).or_default().push(m);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.medications {
            if !MEDICATION_CATEGORIES.contains(&m.category.as_str()) {
                return Err(Error::Validation(format!(
                    "{}: unknown category {}",
                    m.drug_name, m.category
                )));
            }
            if !seen.insert((m.category.clone(), m.color)) {
                return Err(Error::Validation(format!(
                    "{}: color reused within {}",
                    m.drug_name, m.category
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let medications: Vec<MedicationSpec> = serde_json::from_str(&text)?;
        let catalog = MedicationCatalog { medications };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.medications)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_catalogs_are_valid() {
        let c = ClinicalCatalog::standard();
        assert_eq!(c.len(), 36);
        c.validate().unwrap();
        let m = MedicationCatalog::standard();
        assert_eq!(m.len(), 46);
        m.validate().unwrap();
        assert_eq!(m.by_category().len(), 10);
    }

    #[test]
    fn potassium_standardizes_to_zero_at_mean() {
        let c = ClinicalCatalog::standard();
        let k = c.get("Potassium (serum)").unwrap();
        assert_eq!(k.standardize(4.08).unwrap(), 0.0);
        assert!((k.standardize(4.08 + 0.54).unwrap() - 1.0).abs() < 1e-12);
        assert!((k.standardize(4.08 - 2.0 * 0.54).unwrap() + 2.0).abs() < 1e-12);
        assert!(k.standardize(f64::NAN).is_err());
    }

    #[test]
    fn propofol_is_a_sedative() {
        let m = MedicationCatalog::standard();
        assert_eq!(m.get("Propofol").unwrap().category, "Sedatives and Anesthetics");
    }

    #[test]
    fn catalog_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vars.json");
        let c = ClinicalCatalog::standard();
        c.save(&p).unwrap();
        assert_eq!(ClinicalCatalog::load(&p).unwrap(), c);
        let p = dir.path().join("meds.json");
        let m = MedicationCatalog::standard();
        m.save(&p).unwrap();
        assert_eq!(MedicationCatalog::load(&p).unwrap(), m);
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
    }
}
