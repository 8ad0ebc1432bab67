use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::events::{csv_field, open_csv, parse_finite};
use super::{CxrRef, EcgRef, PatientMetadata, StayId, StayRecord};
use crate::error::{Error, Result};

const STAYS_HEADER: [&str; 5] = ["stay_id", "hadm_id", "icu_los_h", "label_mortality", "phenotypes"];
const CXR_HEADER: [&str; 3] = ["stay_id", "time_h", "image_path"];
const ECG_MANIFEST_HEADER: [&str; 4] = ["stay_id", "time_h", "header_path", "data_path"];

fn records(
    path: &Path,
    header: &[&str],
) -> Result<impl Iterator<Item = Result<(usize, csv::StringRecord)>>> {
    let file = path.display().to_string();
    let reader = open_csv(path, header)?;
    Ok(reader.into_records().map(move |r| {
        let r = r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(&file, line, e.to_string())
        })?;
        let line = r.position().map_or(0, |p| p.line() as usize);
        Ok((line, r))
    }))
}

pub fn parse_stays(path: &Path) -> Result<BTreeMap<StayId, StayRecord>> {
    let file = path.display().to_string();
    let mut out = BTreeMap::new();
    for rec in records(path, &STAYS_HEADER)? {
        let (line, r) = rec?;
        let stay_id = r[0].trim().to_string();
        let icu_los_h = parse_finite(&r[2], "icu_los_h", &file, line)?;
        if icu_los_h <= 0.0 {
            return Err(Error::parse(&file, line, "icu_los_h must be positive"));
        }
        let label_mortality = match r[3].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(&file, line, format!("label_mortality must be 0 or 1, got `{other}`"))),
        };
        let pheno = r[4].trim();
        if pheno.len() != 25 || !pheno.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::parse(&file, line, "phenotypes must be a 25-character 0/1 string"));
        }
        let record = StayRecord {
            stay_id: stay_id.clone(),
            hadm_id: r[1].trim().to_string(),
            icu_los_h,
            label_mortality,
            label_phenotypes: pheno.bytes().map(|b| b - b'0').collect(),
            cxr_refs: Vec::new(),
            ecg_refs: Vec::new(),
        };
        if out.insert(stay_id.clone(), record).is_some() {
            return Err(Error::parse(&file, line, format!("duplicate stay_id {stay_id}")));
        }
    }
    Ok(out)
}

pub fn parse_cxr_manifest(path: &Path) -> Result<BTreeMap<StayId, Vec<CxrRef>>> {
    let file = path.display().to_string();
    let mut out: BTreeMap<StayId, Vec<CxrRef>> = BTreeMap::new();
    for rec in records(path, &CXR_HEADER)? {
        let (line, r) = rec?;
        let time_h = parse_finite(&r[1], "time_h", &file, line)?;
        out.entry(r[0].trim().to_string()).or_default().push(CxrRef {
            time_h,
            image_path: r[2].trim().to_string(),
        });
    }
    for refs in out.values_mut() {
        refs.sort_by(|a, b| a.time_h.total_cmp(&b.time_h).then_with(|| a.image_path.cmp(&b.image_path)));
    }
    Ok(out)
}

/// `ecg_manifest.csv`: `stay_id,time_h,header_path,data_path`.
pub fn parse_ecg_manifest(path: &Path) -> Result<BTreeMap<StayId, Vec<EcgRef>>> {
    let file = path.display().to_string();
    let mut out: BTreeMap<StayId, Vec<EcgRef>> = BTreeMap::new();
    for rec in records(path, &ECG_MANIFEST_HEADER)? {
        let (line, r) = rec?;
        let time_h = parse_finite(&r[1], "time_h", &file, line)?;
        out.entry(r[0].trim().to_string()).or_default().push(EcgRef {
            time_h,
            header_path: r[2].trim().to_string(),
            data_path: r[3].trim().to_string(),
        });
    }
    for refs in out.values_mut() {
        refs.sort_by(|a, b| a.time_h.total_cmp(&b.time_h).then_with(|| a.header_path.cmp(&b.header_path)));
    }
    Ok(out)
}

pub fn parse_metadata(path: &Path) -> Result<BTreeMap<StayId, PatientMetadata>> {
    let file = path.display().to_string();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: PatientMetadata = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&file, i + 1, e.to_string()))?;
        out.insert(meta.stay_id.clone(), meta);
    }
    Ok(out)
}

pub fn write_stays<'a>(path: &Path, stays: impl IntoIterator<Item = &'a StayRecord>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", STAYS_HEADER.join(",")).map_err(io)?;
    for s in stays {
        let pheno: String = s.label_phenotypes.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
        writeln!(out, "{},{},{},{},{}", s.stay_id, s.hadm_id, s.icu_los_h, s.label_mortality, pheno).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_cxr_manifest<'a>(
    path: &Path,
    refs: impl IntoIterator<Item = (&'a str, &'a CxrRef)>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", CXR_HEADER.join(",")).map_err(io)?;
    for (stay, r) in refs {
        writeln!(out, "{},{},{}", stay, r.time_h, csv_field(&r.image_path)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_ecg_manifest<'a>(
    path: &Path,
    refs: impl IntoIterator<Item = (&'a str, &'a EcgRef)>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", ECG_MANIFEST_HEADER.join(",")).map_err(io)?;
    for (stay, r) in refs {
        writeln!(out, "{},{},{},{}", stay, r.time_h, csv_field(&r.header_path), csv_field(&r.data_path)).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_metadata<'a>(
    path: &Path,
    metadata: impl IntoIterator<Item = &'a PatientMetadata>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for m in metadata {
        writeln!(out, "{}", serde_json::to_string(m)?).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stays_validate_phenotype_width() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stays.csv");
        std::fs::write(&p, "stay_id,hadm_id,icu_los_h,label_mortality,phenotypes\ns1,h1,50,1,0101\n").unwrap();
        assert!(matches!(parse_stays(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(
            &p,
            format!("stay_id,hadm_id,icu_los_h,label_mortality,phenotypes\ns1,h1,50,1,{}\n", "01".repeat(12) + "1"),
        )
        .unwrap();
        let stays = parse_stays(&p).unwrap();
        assert_eq!(stays["s1"].label_phenotypes.len(), 25);
        assert_eq!(stays["s1"].label_phenotypes[24], 1);
    }

    #[test]
    fn metadata_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metadata.jsonl");
        let m = PatientMetadata {
            stay_id: "s1".into(),
            sex: "F".into(),
            age: 64,
            ethnicity: "WHITE".into(),
            insurance: "Medicare".into(),
            medication_names: vec!["Propofol".into()],
            ..Default::default()
        };
        write_metadata(&p, [&m]).unwrap();
        assert_eq!(parse_metadata(&p).unwrap()["s1"], m);
    }
}
