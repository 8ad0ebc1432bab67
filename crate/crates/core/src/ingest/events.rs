use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{EventSeries, MedicationEvent, Observation, ParseWarning, Parsed, StayId};
use crate::catalog::{ClinicalCatalog, MedicationCatalog};
use crate::error::{Error, Result};

pub(crate) const EVENTS_HEADER: [&str; 4] = ["stay_id", "variable_id", "time_h", "value"];
pub(crate) const MEDS_HEADER: [&str; 4] = ["stay_id", "drug_name", "time_h", "dose"];

pub(crate) fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), 1, e.to_string()))?;
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(reader)
}

pub(crate) fn parse_finite(field: &str, what: &str, file: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(file, line, format!("{what}: cannot parse `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(file, line, format!("{what}: non-finite value `{field}`")));
    }
    Ok(v)
}

/// One raw row of a 4-column events-style file.
struct Row {
    line: usize,
    stay_id: String,
    key: String,
    time_h: f64,
    value: f64,
}

fn read_rows(path: &Path, header: &[&str], value_name: &str) -> Result<Vec<Row>> {
    let file = path.display().to_string();
    let mut reader = open_csv(path, header)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(&file, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 4 {
            return Err(Error::parse(&file, line, "expected 4 fields"));
        }
        let stay_id = record[0].trim().to_string();
        if stay_id.is_empty() {
            return Err(Error::parse(&file, line, "empty stay_id"));
        }
        let time_h = parse_finite(&record[2], "time_h", &file, line)?;
        if time_h < 0.0 {
            return Err(Error::parse(&file, line, format!("time_h must be >= 0, got {time_h}")));
        }
        let value = parse_finite(&record[3], value_name, &file, line)?;
        rows.push(Row {
            line,
            stay_id,
            key: record[1].trim().to_string(),
            time_h,
            value,
        });
    }
    Ok(rows)
}

/// Parses `events.csv` into per-stay series, one per (stay, variable).
///
/// Series within a stay are ordered by variable id; observations by time,
/// then value, so the result does not depend on input row order. Variables
/// absent from the catalog are reported as warnings and skipped.
pub fn parse_events(
    path: &Path,
    catalog: &ClinicalCatalog,
) -> Result<Parsed<BTreeMap<StayId, Vec<EventSeries>>>> {
    let rows = read_rows(path, &EVENTS_HEADER, "value")?;
    let mut grouped: BTreeMap<StayId, BTreeMap<String, Vec<Observation>>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for row in rows {
        if catalog.get(&row.key).is_none() {
            warnings.push(ParseWarning {
                line: row.line,
                message: format!("unknown variable `{}` for stay {}", row.key, row.stay_id),
            });
            continue;
        }
        grouped
            .entry(row.stay_id)
            .or_default()
            .entry(row.key)
            .or_default()
            .push(Observation {
                time_h: row.time_h,
                value: row.value,
            });
    }
    let data = grouped
        .into_iter()
        .map(|(stay_id, vars)| {
            let series = vars
                .into_iter()
                .map(|(variable_id, mut observations)| {
                    observations.sort_by(|a, b| {
                        a.time_h
                            .total_cmp(&b.time_h)
                            .then(a.value.total_cmp(&b.value))
                    });
                    EventSeries {
                        stay_id: stay_id.clone(),
                        variable_id,
                        observations,
                    }
                })
                .collect();
            (stay_id, series)
        })
        .collect();
    Ok(Parsed { data, warnings })
}

/// Parses `meds.csv`. Events are sorted by (time, drug, dose); duplicates are kept.
pub fn parse_medications(
    path: &Path,
    catalog: &MedicationCatalog,
) -> Result<Parsed<BTreeMap<StayId, Vec<MedicationEvent>>>> {
    let file = path.display().to_string();
    let rows = read_rows(path, &MEDS_HEADER, "dose")?;
    let mut data: BTreeMap<StayId, Vec<MedicationEvent>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for row in rows {
        if row.value < 0.0 {
            return Err(Error::parse(&file, row.line, format!("dose must be >= 0, got {}", row.value)));
        }
        if catalog.get(&row.key).is_none() {
            warnings.push(ParseWarning {
                line: row.line,
                message: format!("unknown drug `{}` for stay {}", row.key, row.stay_id),
            });
            continue;
        }
        data.entry(row.stay_id.clone()).or_default().push(MedicationEvent {
            stay_id: row.stay_id,
            drug_name: row.key,
            time_h: row.time_h,
            dose: row.value,
        });
    }
    for events in data.values_mut() {
        events.sort_by(|a, b| {
            a.time_h
                .total_cmp(&b.time_h)
                .then_with(|| a.drug_name.cmp(&b.drug_name))
                .then(a.dose.total_cmp(&b.dose))
        });
    }
    Ok(Parsed { data, warnings })
}

pub fn write_events<'a>(path: &Path, series: impl IntoIterator<Item = &'a EventSeries>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", EVENTS_HEADER.join(",")).map_err(io)?;
    for s in series {
        for o in &s.observations {
            writeln!(out, "{},{},{},{}", s.stay_id, s.variable_id, o.time_h, o.value).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn write_medications<'a>(
    path: &Path,
    events: impl IntoIterator<Item = &'a MedicationEvent>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", MEDS_HEADER.join(",")).map_err(io)?;
    for m in events {
        writeln!(out, "{},{},{},{}", m.stay_id, csv_field(&m.drug_name), m.time_h, m.dose).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
