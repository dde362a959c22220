//! CSV readers and writers.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so every table round-trips exactly.

use std::collections::BTreeMap;
use std::path::Path;

use tumorkin::calibration::PatientSeries;

use crate::error::{CliError, CliResult};

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(CliError::Io(format!("row of length {} under a header of {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Table with a leading text column.
pub fn write_labelled(path: &Path, header: &[&str], rows: &[(String, Vec<f64>)]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for (label, vals) in rows {
        if vals.len() + 1 != header.len() {
            return Err(CliError::Io("row length does not match the header".into()));
        }
        let mut rec = vec![label.clone()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::Io(format!("{}: bad number '{s}': {e}", path.display()))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads `patient_id, t_days, volume_mm3` rows, grouped by patient in order
/// of first appearance.
pub fn read_patients(path: &Path) -> CliResult<Vec<PatientSeries>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ["patient_id", "t_days", "volume_mm3"] {
        return Err(CliError::Config(format!(
            "{}: expected header patient_id,t_days,volume_mm3, got {}",
            path.display(),
            header.join(",")
        )));
    }
    let mut order = Vec::new();
    let mut by_id: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CliError::Config(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let id = rec.get(0).ok_or_else(|| bad("patient_id"))?.to_string();
        let t: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("t_days"))?;
        let v: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("volume_mm3"))?;
        if !by_id.contains_key(&id) {
            order.push(id.clone());
        }
        by_id.entry(id).or_default().push((t, v));
    }
    let series: Vec<PatientSeries> = order
        .into_iter()
        .map(|id| {
            let observations = by_id.remove(&id).unwrap_or_default();
            PatientSeries { id, observations }
        })
        .collect();
    for s in &series {
        s.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(series)
}

pub fn write_patients(path: &Path, series: &[PatientSeries]) -> CliResult<()> {
    let rows: Vec<(String, Vec<f64>)> =
        series.iter().flat_map(|s| s.observations.iter().map(move |&(t, v)| (s.id.clone(), vec![t, v]))).collect();
    write_labelled(path, &["patient_id", "t_days", "volume_mm3"], &rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![vec![0.1 + 0.2, 1e-300, -3.5], vec![std::f64::consts::PI, 1.0 / 3.0, 12345678.9]];
        write_table(&p, &["a", "b", "c"], &rows).unwrap();
        let (h, back) = read_table(&p).unwrap();
        assert_eq!(h, ["a", "b", "c"]);
        assert_eq!(back, rows);
    }

    #[test]
    fn patients_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let s = vec![
            PatientSeries { id: "B".into(), observations: vec![(0.0, 1000.5), (30.0, 2000.25)] },
            PatientSeries { id: "A".into(), observations: vec![(1.0, 10.0), (2.0, 11.0), (4.0, 13.0)] },
        ];
        write_patients(&p, &s).unwrap();
        assert_eq!(read_patients(&p).unwrap(), s);
    }

    #[test]
    fn bad_header_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, "id,t,v\nA,0,1\nA,1,2\n").unwrap();
        assert!(matches!(read_patients(&p), Err(CliError::Config(_))));
    }
}
