//! CSV tables with a `#`-commented metadata header.
//!
//! Floats are written with 17 significant digits so they parse back to the
//! same `f64`; integers are written as integers.

use std::fmt::{self, Write as _};
use std::path::Path;

use crate::error::{Result, WalkError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:.16e}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    metadata: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            metadata: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[idx] {
                    Cell::Int(v) => v as f64,
                    Cell::Float(v) => v,
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            for (i, line) in v.lines().enumerate() {
                if i == 0 {
                    let _ = writeln!(out, "# {k}: {line}");
                } else {
                    let _ = writeln!(out, "#   {line}");
                }
            }
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| WalkError::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| WalkError::io(path, e))
    }
}

/// Metadata pairs, column names and rows of a parsed table.
pub type ParsedCsv = (Vec<(String, String)>, Vec<String>, Vec<Vec<f64>>);

/// Reads a table written by [`Table::to_csv`].
pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut meta = Vec::new();
    let mut columns = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once(": ") {
                meta.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        if columns.is_none() {
            columns = Some(line.split(',').map(str::to_string).collect::<Vec<_>>());
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|_| WalkError::Parse(format!("bad number {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let columns = columns.ok_or_else(|| WalkError::Parse("no header row".into()))?;
    Ok((meta, columns, rows))
}
