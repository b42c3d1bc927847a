//! Report emission: `<stem>.json` with the pass/fail criteria and details,
//! `<stem>.csv` with one row per corpus function.
//!
//! Floats in the CSV are written with 17 significant digits
//! (`-1.2345678901234567e-3`), so rows round-trip bit-exactly; missing values
//! are written as `nan`.

use campanato_core::Result;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Criterion {
    /// Passes iff `value ≤ threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }

    /// Passes iff `value ≥ threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value >= threshold }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, threshold: 1.0, pass: ok }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_float(*v),
                    Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub passed: bool,
    /// Set for `n < 3`, where the Schrödinger theorems are only analogs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub criteria: Vec<Criterion>,
    pub details: serde_json::Value,
    #[serde(skip)]
    pub table: Option<TableHandle>,
}

/// Wrapper so that [`Report`] can derive equality and serde while carrying a
/// table that is written separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableHandle(pub Table);

impl Report {
    pub fn new(experiment: &str, criteria: Vec<Criterion>, details: serde_json::Value, table: Option<Table>) -> Self {
        Self {
            experiment: experiment.into(),
            passed: criteria.iter().all(|c| c.pass),
            label: None,
            criteria,
            details,
            table: table.map(TableHandle),
        }
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    /// Writes `<dir>/<stem>.json` and, when there is a table, `<dir>/<stem>.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n")?;
        let mut written = vec![json];
        if let Some(TableHandle(t)) = &self.table {
            let csv = dir.join(format!("{stem}.csv"));
            fs::write(&csv, t.to_csv())?;
            written.push(csv);
        }
        Ok(written)
    }

    /// One `PASS`/`FAIL` line per criterion.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            let _ = writeln!(
                s,
                "{} {}: {} (threshold {})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                format_float(c.value),
                format_float(c.threshold)
            );
        }
        s
    }
}
