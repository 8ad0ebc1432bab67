use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CxrRef, EcgRef, EventSeries, MedicationEvent, PatientMetadata, StayId, StayRecord};

pub const DEFAULT_WINDOW_H: f64 = 48.0;

/// One stay that passed every cohort rule, with its inputs cut to the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortInstance {
    pub stay: StayRecord,
    pub events: Vec<EventSeries>,
    pub meds: Vec<MedicationEvent>,
    pub cxr: CxrRef,
    /// `None` when no ECG was recorded inside the window.
    pub ecg: Option<EcgRef>,
    pub metadata: PatientMetadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exclusion {
    ShortStay,
    NoCxrInWindow,
    MissingMetadata,
    AgeOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortBuild {
    pub instances: Vec<CohortInstance>,
    pub excluded: Vec<(StayId, Exclusion)>,
}

/// Applies the cohort rules: stays shorter than `window_h` are dropped, each
/// remaining stay is paired with its latest in-window CXR (required) and ECG
/// (optional), and events and medications are cut to `[0, window_h]`.
///
/// The stays' own `cxr_refs`/`ecg_refs` are merged with the manifest maps.
/// Output is ordered by stay id.
pub fn build_cohort(
    stays: &BTreeMap<StayId, StayRecord>,
    events: &BTreeMap<StayId, Vec<EventSeries>>,
    meds: &BTreeMap<StayId, Vec<MedicationEvent>>,
    cxr: &BTreeMap<StayId, Vec<CxrRef>>,
    ecg: &BTreeMap<StayId, Vec<EcgRef>>,
    metadata: &BTreeMap<StayId, PatientMetadata>,
    window_h: f64,
) -> CohortBuild {
    assert!(window_h > 0.0, "window_h must be positive");
    let mut instances = Vec::new();
    let mut excluded = Vec::new();
    for (id, stay) in stays {
        if stay.icu_los_h < window_h {
            excluded.push((id.clone(), Exclusion::ShortStay));
            continue;
        }
        let mut stay = stay.clone();
        stay.cxr_refs.extend(cxr.get(id).into_iter().flatten().cloned());
        stay.ecg_refs.extend(ecg.get(id).into_iter().flatten().cloned());
        stay.cxr_refs
            .sort_by(|a, b| a.time_h.total_cmp(&b.time_h).then_with(|| a.image_path.cmp(&b.image_path)));
        stay.cxr_refs.dedup();
        stay.ecg_refs
            .sort_by(|a, b| a.time_h.total_cmp(&b.time_h).then_with(|| a.header_path.cmp(&b.header_path)));
        stay.ecg_refs.dedup();

        let Some(paired_cxr) = stay.cxr_refs.iter().rev().find(|r| r.time_h <= window_h).cloned() else {
            excluded.push((id.clone(), Exclusion::NoCxrInWindow));
            continue;
        };
        let paired_ecg = stay.ecg_refs.iter().rev().find(|r| r.time_h <= window_h).cloned();
        let Some(meta) = metadata.get(id) else {
            excluded.push((id.clone(), Exclusion::MissingMetadata));
            continue;
        };
        if !(18..=91).contains(&meta.age) {
            excluded.push((id.clone(), Exclusion::AgeOutOfRange));
            continue;
        }
        let events = events
            .get(id)
            .map(|series| {
                series
                    .iter()
                    .map(|s| EventSeries {
                        stay_id: s.stay_id.clone(),
                        variable_id: s.variable_id.clone(),
                        observations: s.observations.iter().copied().filter(|o| o.time_h <= window_h).collect(),
                    })
                    .filter(|s| !s.observations.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        let meds = meds
            .get(id)
            .map(|m| m.iter().filter(|e| e.time_h <= window_h).cloned().collect())
            .unwrap_or_default();
        instances.push(CohortInstance {
            stay,
            events,
            meds,
            cxr: paired_cxr,
            ecg: paired_ecg,
            metadata: meta.clone(),
        });
    }
    CohortBuild { instances, excluded }
}
