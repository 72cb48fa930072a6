//! Artifact emission: CSV tables and JSON reports, each carrying the
//! resolved configuration and a SHA-256 hash of its payload.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A header row and data rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn body(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(Cell::render).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// One command's output in both renderings.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub command: String,
    pub table: Table,
    pub report: Value,
}

impl Artifact {
    pub fn new(command: &str, table: Table, report: &impl Serialize) -> Result<Self> {
        let report = serde_json::to_value(report).map_err(|e| Error::Io(e.to_string()))?;
        Ok(Artifact { command: command.to_string(), table, report })
    }

    pub fn render(&self, cfg: &RunConfig) -> Result<String> {
        match cfg.output_format {
            OutputFormat::Csv => Ok(self.render_csv(cfg)),
            OutputFormat::Json => self.render_json(cfg),
        }
    }

    /// Comment lines with the command, every config entry and the hash of
    /// the table that follows.
    pub fn render_csv(&self, cfg: &RunConfig) -> String {
        let body = self.table.body();
        let mut out = format!("# contact-thermo {}\n", self.command);
        for (k, v) in cfg.entries() {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&format!("# content_sha256 = {}\n", sha256_hex(body.as_bytes())));
        out.push_str(&body);
        out
    }

    pub fn render_json(&self, cfg: &RunConfig) -> Result<String> {
        let payload = serde_json::to_string(&self.report).map_err(|e| Error::Io(e.to_string()))?;
        let config: Map<String, Value> =
            cfg.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
        let mut top = Map::new();
        top.insert("command".into(), Value::String(self.command.clone()));
        top.insert("config".into(), Value::Object(config));
        top.insert("report".into(), self.report.clone());
        top.insert("content_sha256".into(), Value::String(sha256_hex(payload.as_bytes())));
        let mut s = serde_json::to_string_pretty(&Value::Object(top)).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}
