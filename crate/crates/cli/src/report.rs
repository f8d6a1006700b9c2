//! Byte-stable artifact writers: JSON reports through serde with fixed field
//! order, CSV curves with 12 significant digits.

use anyhow::Result;
use lorentz_core::numerics::sig12;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// CSV with a header row; every numeric cell rendered at 12 significant
/// digits so byte comparison is meaningful.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { buf: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                CsvCell::Int(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                CsvCell::Float(v) => self.buf.push_str(&sig12(*v)),
                CsvCell::Text(v) => self.buf.push_str(v),
            }
        }
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.buf)?;
        Ok(())
    }
}

pub enum CsvCell {
    Int(i64),
    Float(f64),
    Text(String),
}

pub fn int(v: impl Into<i64>) -> CsvCell {
    CsvCell::Int(v.into())
}

pub fn num(v: f64) -> CsvCell {
    CsvCell::Float(v)
}

pub fn text(v: impl Into<String>) -> CsvCell {
    CsvCell::Text(v.into())
}

/// Aligned two-column summary table for terminal output.
pub fn summary_table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:width$}  {v}");
    }
    out
}
