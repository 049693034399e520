//! Result files: `result.json` and RFC-4180 CSV tables.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    /// Tau-style value: `inf` when absent.
    pub fn or_inf(x: Option<f64>) -> Cell {
        Cell::Num(x.unwrap_or(f64::INFINITY))
    }
}

/// 17 significant digits in scientific notation; `inf`, `-inf`, `nan` for
/// non-finite values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WallClock {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
}

/// Provenance block of `result.json`. Everything but `wall_clock` is a
/// function of the configuration bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub conventions: Value,
    pub error_estimates: Value,
    pub tables: Vec<String>,
    pub wall_clock: WallClock,
}

#[derive(Serialize)]
struct ResultDocument<'a> {
    manifest: &'a RunManifest,
    result: &'a Value,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::resource(format!("cannot write {}: {e}", path.display()))
}

/// Writes every table and then `result.json` into `dir`.
pub fn write_all(dir: &Path, manifest: &RunManifest, result: &Value, tables: &[Table]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, t.to_bytes()).map_err(|e| io_error(&path, e))?;
    }
    let mut text = serde_json::to_string_pretty(&ResultDocument { manifest, result }).expect("result serializes");
    text.push('\n');
    let path = dir.join("result.json");
    fs::write(&path, text).map_err(|e| io_error(&path, e))
}
