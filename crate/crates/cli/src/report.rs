//! Run artifacts: `report.json`, CSV tables and `summary.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// A CSV table held in memory until the run succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&'static str]) -> Self {
        Self {
            file: file.to_owned(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form, so CSVs are as reproducible as JSON.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Everything a subcommand produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub command: &'static str,
    pub result: Value,
    pub tables: Vec<Table>,
    /// Human-readable lines, each naming the property it reports on.
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

impl Artifacts {
    pub fn new(command: &'static str, result: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            command,
            result: serde_json::to_value(result).map_err(|e| CliError::Output(e.to_string()))?,
            tables: Vec::new(),
            summary: Vec::new(),
            warnings: Vec::new(),
        })
    }
}

/// The full report with its provenance header. Keys are sorted, so the
/// rendering is canonical.
pub fn report_value(config: &RunConfig, art: &Artifacts) -> Value {
    json!({
        "tool": "fracheat",
        "version": env!("CARGO_PKG_VERSION"),
        "command": art.command,
        "config_hash": config.hash(),
        "config": serde_json::to_value(config).expect("config serializes"),
        "result": art.result,
        "warnings": art.warnings,
    })
}

pub fn render(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Write all artifacts into `dir`; returns the paths written.
pub fn emit(dir: &Path, config: &RunConfig, art: &Artifacts) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();

    let report = dir.join("report.json");
    fs::write(&report, render(&report_value(config, art))).map_err(|e| io_err(&report, e))?;
    written.push(report);

    for table in &art.tables {
        let path = dir.join(&table.file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        written.push(path);
    }

    let summary = dir.join("summary.txt");
    let mut text = format!(
        "fracheat {} {}\nconfig hash {}\n\n",
        env!("CARGO_PKG_VERSION"),
        art.command,
        config.hash()
    );
    for line in &art.summary {
        text.push_str(line);
        text.push('\n');
    }
    for w in &art.warnings {
        text.push_str("warning: ");
        text.push_str(w);
        text.push('\n');
    }
    fs::write(&summary, text).map_err(|e| io_err(&summary, e))?;
    written.push(summary);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_round_trips() {
        let v = json!({"b": [1.0, 0.1, 1e-300, 2.5e17], "a": {"z": null, "y": "s"}});
        let text = render(&v);
        let again: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(render(&again), text);
    }

    #[test]
    fn numbers_round_trip_through_csv_text() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-310] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
