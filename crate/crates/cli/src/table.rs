//! Numeric result tables with '#'-prefixed metadata, emitted as CSV.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

/// Rectangular table of numeric cells plus a metadata header (config echo,
/// tool version, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Emitted as `# key = value` lines before the header.
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn add_metadata(&mut self, key: &str, value: &str) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cell from the first row by column name.
    pub fn value(&self, name: &str) -> Option<f64> {
        let idx = self.column(name)?;
        self.rows.first().map(|r| r[idx])
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.metadata {
            if value.is_empty() {
                let _ = writeln!(out, "# {key}");
            } else {
                let _ = writeln!(out, "# {key} = {value}");
            }
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_cell(*v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Write the table; I/O failures carry the path.
    pub fn emit_csv(&self, path: &Path) -> Result<(), String> {
        let mut file = std::fs::File::create(path)
            .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))
    }
}

/// 17-significant-digit float formatting: round-trips any f64 exactly.
pub fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}
