//! CSV tables and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};

/// Fixed float format: 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

/// Column name and unit; the unit is echoed in the manifest.
#[derive(Clone, Copy, Debug)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

/// A table is written in one piece so concurrent sweeps never interleave rows.
#[derive(Clone, Debug)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Output directory, written files and everything that goes into the manifest.
#[derive(Debug)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
    files: Vec<Json>,
    diagnostics: Map<String, Json>,
    notes: Vec<String>,
    extra: Map<String, Json>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunRecord {
    pub fn new(dir: PathBuf, csv: bool, json: bool) -> Self {
        Self {
            dir,
            csv,
            json,
            files: Vec::new(),
            diagnostics: Map::new(),
            notes: Vec::new(),
            extra: Map::new(),
        }
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> io::Result<()> {
        if !self.csv {
            return Ok(());
        }
        fs::create_dir_all(&self.dir)?;
        let bytes = table.to_bytes()?;
        fs::write(self.dir.join(name), &bytes)?;
        let columns: Vec<Json> = table
            .columns
            .iter()
            .map(|c| json!({ "name": c.name, "unit": c.unit }))
            .collect();
        self.files.push(json!({
            "name": name,
            "sha256": sha256_hex(&bytes),
            "rows": table.rows.len(),
            "columns": columns,
        }));
        Ok(())
    }

    pub fn diagnostic(&mut self, key: &str, value: Json) {
        self.diagnostics.insert(key.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn extra(&mut self, key: &str, value: Json) {
        self.extra.insert(key.to_string(), value);
    }

    /// Writes `manifest.json` next to the tables.
    #[allow(clippy::too_many_arguments)]
    pub fn write_manifest(
        &self,
        scenario: &str,
        status: &str,
        error: Option<&str>,
        config: Json,
        overrides: Json,
        wall_time_s: f64,
    ) -> io::Result<Option<PathBuf>> {
        if !self.json {
            return Ok(None);
        }
        fs::create_dir_all(&self.dir)?;
        let mut m = Map::new();
        m.insert("scenario".into(), json!(scenario));
        m.insert("status".into(), json!(status));
        m.insert("error".into(), error.map_or(Json::Null, |e| json!(e)));
        m.insert("config".into(), config);
        m.insert("overrides".into(), overrides);
        m.insert(
            "versions".into(),
            json!({ "floqsq": env!("CARGO_PKG_VERSION"), "manifest_format": 1 }),
        );
        m.insert("wall_time_s".into(), json!(wall_time_s));
        for (k, v) in &self.extra {
            m.insert(k.clone(), v.clone());
        }
        m.insert("diagnostics".into(), Json::Object(self.diagnostics.clone()));
        m.insert("notes".into(), json!(self.notes));
        m.insert("files".into(), Json::Array(self.files.clone()));
        let path = self.dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&Json::Object(m)).map_err(io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(Some(path))
    }
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
        let x = 0.30000000000000004;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn table_bytes() {
        let mut t = Table::new(vec![col("N", "1"), col("xi2", "1")]);
        t.push(vec![6usize.into(), 0.5.into()]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "N,xi2\n6,5.0000000000000000e-1\n");
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
