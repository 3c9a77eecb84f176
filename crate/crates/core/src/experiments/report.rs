//! Tabular report emission: CSV with a fixed column order, or a single JSON
//! document with a schema-version field. Numeric cells carry 6 significant
//! digits; emission is byte-identical for identical records.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportValue {
    Str(String),
    Int(i64),
    Num(f64),
}

impl ReportValue {
    fn render_csv(&self) -> String {
        match self {
            ReportValue::Str(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            ReportValue::Int(i) => i.to_string(),
            ReportValue::Num(x) => format_sig(*x, 6),
        }
    }
}

/// A rectangular report: named columns, typed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<ReportValue>>,
}

impl ReportTable {
    pub fn new(columns: &[&str]) -> Self {
        ReportTable {
            schema_version: REPORT_SCHEMA_VERSION,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<ReportValue>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.render_csv()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        // Round numeric cells before serialization so re-parsing recovers
        // exactly what the CSV shows.
        let rounded = ReportTable {
            schema_version: self.schema_version,
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|v| match v {
                            ReportValue::Num(x) => ReportValue::Num(round_sig(*x, 6)),
                            other => other.clone(),
                        })
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&rounded).expect("report tables always serialize")
    }

    pub fn from_json(text: &str) -> Result<ReportTable> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            offset: 0,
            field: "report",
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::config(format!(
                "unknown report format {other:?}; expected csv or json"
            ))),
        }
    }
}

/// Writes a table in the requested format. Empty tables are rejected.
pub fn emit_report(table: &ReportTable, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::contract("emit_report: no records"));
    }
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Csv => table.to_csv(),
        ReportFormat::Json => table.to_json(),
    };
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = digits - 1 - x.abs().log10().floor() as i32;
    let scale = 10f64.powi(magnitude);
    (x * scale).round() / scale
}

/// Shortest decimal rendering of the 6-significant-digit rounding.
pub fn format_sig(x: f64, digits: i32) -> String {
    let r = round_sig(x, digits);
    if r == 0.0 {
        return "0".to_string();
    }
    format!("{r}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_rounding() {
        assert_eq!(round_sig(0.123456789, 6), 0.123457);
        assert_eq!(round_sig(123456789.0, 6), 123457000.0);
        assert_eq!(round_sig(-0.000123456789, 6), -0.000123457);
        assert_eq!(round_sig(0.0, 6), 0.0);
        assert_eq!(format_sig(2.0 / 3.0, 6), "0.666667");
    }

    #[test]
    fn single_record_csv_is_two_lines() {
        let mut t = ReportTable::new(&["method", "accuracy"]);
        t.push_row(vec![
            ReportValue::Str("con2da".into()),
            ReportValue::Num(0.9512345),
        ]);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), "method,accuracy");
        assert_eq!(csv.lines().nth(1).unwrap(), "con2da,0.951235");
    }

    #[test]
    fn json_round_trips_all_fields() {
        let mut t = ReportTable::new(&["label", "n", "x"]);
        t.push_row(vec![
            ReportValue::Str("w/o L_cont".into()),
            ReportValue::Int(5),
            ReportValue::Num(0.25),
        ]);
        let parsed = ReportTable::from_json(&t.to_json()).unwrap();
        assert_eq!(parsed, t);
        assert_eq!(parsed.schema_version, REPORT_SCHEMA_VERSION);
    }

    #[test]
    fn emission_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = ReportTable::new(&["a", "b"]);
        t.push_row(vec![ReportValue::Num(1.0 / 3.0), ReportValue::Int(7)]);
        let p1 = dir.path().join("r1.csv");
        let p2 = dir.path().join("r2.csv");
        emit_report(&t, ReportFormat::Csv, &p1).unwrap();
        emit_report(&t, ReportFormat::Csv, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let j1 = dir.path().join("r1.json");
        let j2 = dir.path().join("r2.json");
        emit_report(&t, ReportFormat::Json, &j1).unwrap();
        emit_report(&t, ReportFormat::Json, &j2).unwrap();
        assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
    }

    #[test]
    fn empty_table_is_rejected() {
        let t = ReportTable::new(&["a"]);
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&t, ReportFormat::Csv, dir.path().join("x.csv")).is_err());
    }

    #[test]
    fn csv_quotes_awkward_strings() {
        let mut t = ReportTable::new(&["label"]);
        t.push_row(vec![ReportValue::Str("a,b \"c\"".into())]);
        assert_eq!(t.to_csv().lines().nth(1).unwrap(), "\"a,b \"\"c\"\"\"");
    }
}
