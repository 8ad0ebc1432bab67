use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ingest::PatientMetadata;

pub const SECTION_ORDER: [&str; 6] = ["demographics", "findings", "impressions", "ecg", "diagnoses", "medications"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPrompt {
    pub stay_id: String,
    pub text: String,
    /// Byte range of each emitted section, in emission order.
    pub section_spans: Vec<(String, Range<usize>)>,
}

/// Renders metadata into the fixed prompt template.
///
/// The diagnoses section is omitted entirely when `include_diagnoses` is
/// false (phenotyping predicts diagnoses, so they may not be inputs).
/// Medication names are listed without doses.
pub fn serialize_metadata(meta: &PatientMetadata, include_diagnoses: bool) -> TextPrompt {
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut section = |name: &str, body: String, text: &mut String| {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.len();
        text.push_str(&body);
        spans.push((name.to_string(), start..text.len()));
    };
    section(
        "demographics",
        format!(
            "sex: {}; age: {}; ethnicity: {}; insurance: {}.",
            meta.sex, meta.age, meta.ethnicity, meta.insurance
        ),
        &mut text,
    );
    section("findings", format!("findings: {}.", meta.cxr_findings), &mut text);
    section("impressions", format!("impressions: {}.", meta.cxr_impressions), &mut text);
    section("ecg", format!("ecg: {}.", meta.ecg_machine_measurements), &mut text);
    if include_diagnoses {
        section("diagnoses", format!("diagnoses: {}.", meta.icd_diagnoses.join(", ")), &mut text);
    }
    section("medications", format!("medications: {}.", meta.medication_names.join(", ")), &mut text);
    TextPrompt {
        stay_id: meta.stay_id.clone(),
        text,
        section_spans: spans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_metadata_bytes() {
        let m = PatientMetadata { stay_id: "s".into(), ..Default::default() };
        let p = serialize_metadata(&m, true);
        assert_eq!(
            p.text,
            "sex: ; age: 0; ethnicity: ; insurance: . findings: . impressions: . ecg: . diagnoses: . medications: ."
        );
        let names: Vec<_> = p.section_spans.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, SECTION_ORDER);
        for (name, span) in &p.section_spans {
            if name != "demographics" {
                assert!(p.text[span.clone()].starts_with(&name[..3]));
            }
        }
    }

    #[test]
    fn diagnoses_omitted_for_phenotyping() {
        let m = PatientMetadata {
            stay_id: "s".into(),
            icd_diagnoses: vec!["I10".into()],
            ..Default::default()
        };
        let p = serialize_metadata(&m, false);
        assert!(!p.text.contains("diagnoses:"));
        assert!(!p.text.contains("I10"));
        assert!(serialize_metadata(&m, true).text.contains("diagnoses: I10."));
    }

    #[test]
    fn medications_joined_without_doses() {
        let m = PatientMetadata {
            stay_id: "s".into(),
            medication_names: vec!["Propofol".into(), "Fentanyl".into()],
            ..Default::default()
        };
        assert!(serialize_metadata(&m, true).text.ends_with("medications: Propofol, Fentanyl."));
    }
}
