use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EcgRecord;
use crate::error::{Error, Result};

/// JSON sidecar describing a raw lead-major little-endian f32 ECG blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgHeader {
    pub stay_id: String,
    pub sample_rate_hz: u32,
    pub n_samples: usize,
    pub lead_names: Vec<String>,
}

pub fn parse_ecg(header_path: &Path, data_path: &Path) -> Result<EcgRecord> {
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: EcgHeader = serde_json::from_str(&text)?;
    if header.lead_names.len() != 12 {
        return Err(Error::Validation(format!(
            "{}: expected 12 leads, header declares {}",
            header_path.display(),
            header.lead_names.len()
        )));
    }
    if header.sample_rate_hz == 0 {
        return Err(Error::Validation(format!(
            "{}: sample_rate_hz must be positive",
            header_path.display()
        )));
    }
    let bytes = std::fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let expected = 12 * header.n_samples * 4;
    if bytes.len() < expected {
        return Err(Error::Validation(format!(
            "{}: truncated ECG data, expected {expected} bytes, found {}",
            data_path.display(),
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Validation(format!(
            "{}: ECG data longer than declared ({} > {expected} bytes)",
            data_path.display(),
            bytes.len()
        )));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let leads = samples
        .chunks(header.n_samples.max(1))
        .take(12)
        .map(<[f64]>::to_vec)
        .collect::<Vec<_>>();
    let leads = if header.n_samples == 0 { vec![Vec::new(); 12] } else { leads };
    Ok(EcgRecord {
        stay_id: header.stay_id,
        sample_rate_hz: header.sample_rate_hz,
        lead_names: header.lead_names,
        leads,
    })
}

/// Writes the header JSON and the f32 data blob for `record`.
pub fn write_ecg(record: &EcgRecord, header_path: &Path, data_path: &Path) -> Result<()> {
    if record.leads.len() != 12 || record.lead_names.len() != 12 {
        return Err(Error::Validation("expected 12 leads".into()));
    }
    let n = record.n_samples();
    if record.leads.iter().any(|l| l.len() != n) {
        return Err(Error::Validation("leads differ in length".into()));
    }
    let header = EcgHeader {
        stay_id: record.stay_id.clone(),
        sample_rate_hz: record.sample_rate_hz,
        n_samples: n,
        lead_names: record.lead_names.clone(),
    };
    std::fs::write(header_path, serde_json::to_string(&header)?)
        .map_err(|e| Error::io(header_path, e))?;
    let mut bytes = Vec::with_capacity(12 * n * 4);
    for lead in &record.leads {
        for &v in lead {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))
}
