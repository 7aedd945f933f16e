//! Result tables and their CSV/JSON emitters.

use crate::CliError;
use indexmap::IndexMap;
use serde_json::Value;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Rows with a fixed column list; missing cells are `null`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn from_rows(columns: Vec<String>, rows: Vec<IndexMap<String, Value>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| columns.iter().map(|c| r.get(c).cloned().unwrap_or(Value::Null)).collect())
            .collect();
        Self { columns, rows }
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Numeric column; `None` for absent columns, `NaN` for empty cells.
    pub fn f64_column(&self, name: &str) -> Option<Vec<f64>> {
        Some(self.column(name)?.into_iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
    }

    /// Rows whose `error` cell is non-empty.
    pub fn failed_rows(&self) -> usize {
        self.column("error")
            .map(|c| c.iter().filter(|v| v.as_str().is_some_and(|s| !s.is_empty())).count())
            .unwrap_or(0)
    }

    pub fn records(&self) -> Vec<IndexMap<String, Value>> {
        self.rows
            .iter()
            .map(|r| self.columns.iter().cloned().zip(r.iter().cloned()).collect())
            .collect()
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> Result<(), CliError> {
        if self.rows.is_empty() {
            return Err(CliError::Numeric("no rows to emit".into()));
        }
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns).map_err(io)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(cell)).map_err(io)?;
                }
                w.flush().map_err(|e| CliError::Io(e.to_string()))?;
            }
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &self.records()).map_err(|e| CliError::Io(e.to_string()))?;
                out.write_all(b"\n").map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn write_path(&self, format: Format, path: &Path) -> Result<(), CliError> {
        let mut buf = Vec::new();
        self.write(format, &mut buf)?;
        std::fs::write(path, buf).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}
