//! Delimited-text and JSON-sidecar input/output.
//!
//! All tabular files are comma-separated with a header row, UTF-8, '.'
//! decimal separator. Floats are rendered with Rust's shortest round-trip
//! formatting, so write-then-read is exact and reruns are byte-identical.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::{ingest_cohort, Cohort, CovariateSchema};
use crate::error::SurvError;
use crate::Result;

/// Reads a covariate schema from its JSON sidecar:
/// `{"covariates": [{"name": ..., "kind": ..., ("levels": [...])}]}`.
pub fn read_schema(path: &Path) -> Result<CovariateSchema> {
    let text = std::fs::read_to_string(path)?;
    parse_schema(&text)
}

pub fn parse_schema(text: &str) -> Result<CovariateSchema> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Sidecar {
        covariates: Vec<Entry>,
    }
    #[derive(serde::Deserialize)]
    struct Entry {
        name: String,
        #[serde(flatten)]
        kind: crate::data::CovariateKind,
    }
    let sidecar: Sidecar = serde_json::from_str(text)?;
    CovariateSchema::new(sidecar.covariates.into_iter().map(|e| (e.name, e.kind)).collect())
}

pub fn write_schema(path: &Path, schema: &CovariateSchema) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Sidecar<'a> {
        covariates: Vec<Entry<'a>>,
    }
    #[derive(serde::Serialize)]
    struct Entry<'a> {
        name: &'a str,
        #[serde(flatten)]
        kind: &'a crate::data::CovariateKind,
    }
    let sidecar = Sidecar {
        covariates: schema
            .names()
            .iter()
            .zip(schema.kinds())
            .map(|(n, k)| Entry { name: n, kind: k })
            .collect(),
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Reads a cohort from delimited text with header
/// `time,event,treatment,<covariates in schema order>`.
pub fn read_cohort<R: Read>(reader: R, schema: &CovariateSchema) -> Result<Cohort> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or(SurvError::EmptyInput("cohort file has no header"))??;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let mut expected = vec!["time", "event", "treatment"];
    expected.extend(schema.names().iter().map(|s| s.as_str()));
    if cols != expected {
        return Err(SurvError::Schema(format!(
            "header mismatch: expected {expected:?}, got {cols:?}"
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.trim_end().split(',').map(|t| t.to_string()).collect());
    }
    ingest_cohort(&rows, schema)
}

pub fn read_cohort_file(path: &Path, schema: &CovariateSchema) -> Result<Cohort> {
    read_cohort(std::fs::File::open(path)?, schema)
}

/// Writes a cohort in the same layout [`read_cohort`] expects.
pub fn write_cohort<W: Write>(mut w: W, cohort: &Cohort) -> Result<()> {
    let schema = cohort.schema();
    let mut header = String::from("time,event,treatment");
    for name in schema.names() {
        header.push(',');
        header.push_str(name);
    }
    writeln!(w, "{header}")?;
    for r in cohort.records() {
        let mut line = format!("{},{},{}", r.observed_time, u8::from(r.event), r.treatment);
        for j in 0..schema.len() {
            line.push(',');
            line.push_str(&schema.format_value(j, r.covariates[j]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_cohort_file(path: &Path, cohort: &Cohort) -> Result<()> {
    write_cohort(std::fs::File::create(path)?, cohort)
}

/// Writes a named-column table of f64 values (row-major).
pub fn write_table<W: Write>(mut w: W, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a single named column of f64 values from a delimited table.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(SurvError::EmptyInput("table has no header"))?;
    let idx = header
        .split(',')
        .position(|c| c == column)
        .ok_or_else(|| SurvError::Schema(format!("column {column:?} not found in {header:?}")))?;
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok = line.split(',').nth(idx).ok_or_else(|| SurvError::Ingestion {
            row,
            reason: format!("row has no column {idx}"),
        })?;
        out.push(tok.parse::<f64>().map_err(|_| SurvError::Ingestion {
            row,
            reason: format!("invalid number {tok:?} in column {column:?}"),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateKind, SurvivalRecord};

    fn schema() -> CovariateSchema {
        CovariateSchema::new(vec![
            ("x1".into(), CovariateKind::Continuous),
            (
                "grp".into(),
                CovariateKind::Categorical {
                    levels: vec!["a".into(), "b".into()],
                },
            ),
        ])
        .unwrap()
    }

    #[test]
    fn cohort_roundtrip_is_exact() {
        let cohort = Cohort::new(
            schema(),
            vec![
                SurvivalRecord::new(1.25e-3, true, 0, vec![0.1 + 0.2, 0.0]),
                SurvivalRecord::new(17.0, false, 1, vec![-3.5, 1.0]),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &cohort).unwrap();
        let back = read_cohort(&buf[..], &schema()).unwrap();
        assert_eq!(cohort, back);
        // Second serialization is byte-identical.
        let mut buf2 = Vec::new();
        write_cohort(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn header_mismatch_rejected() {
        let text = b"time,event,arm,x1,grp\n1,1,0,0.5,a\n";
        assert!(read_cohort(&text[..], &schema()).is_err());
    }

    #[test]
    fn schema_sidecar_roundtrip() {
        let s = schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.json");
        write_schema(&path, &s).unwrap();
        let back = read_schema(&path).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn read_named_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(read_column(&path, "b").unwrap(), vec![2.0, 4.0]);
        assert!(read_column(&path, "c").is_err());
    }
}
