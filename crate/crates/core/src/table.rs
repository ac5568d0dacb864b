//! Minimal delimited-table reader and writer.
//!
//! Every file format of the engine is a comma-separated table with a header
//! row, no quoting, and fields free of commas. Floats are written with the
//! shortest round-trip representation, so identical runs produce identical
//! bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A parsed table: header names and rows of string fields.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        Table::parse(&text).map_err(|e| match e {
            Error::Table(msg) => Error::Table(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Table("empty table".into()))?
            .trim_end_matches('\r')
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<String> = line
                .trim_end_matches('\r')
                .split(',')
                .map(|s| s.trim().to_string())
                .collect();
            if fields.len() != header.len() {
                return Err(Error::Table(format!(
                    "row {} has {} fields, header has {}",
                    i + 2,
                    fields.len(),
                    header.len()
                )));
            }
            rows.push(fields);
        }
        Ok(Table { header, rows })
    }

    /// Index of a required column.
    pub fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Table(format!("missing column {name}")))
    }

    pub fn f64(&self, row: &[String], col: usize) -> Result<f64> {
        row[col].parse::<f64>().map_err(|_| {
            Error::Table(format!(
                "bad number {:?} in column {}",
                row[col], self.header[col]
            ))
        })
    }

    /// Parses an optional value: an empty field is missing.
    pub fn opt_f64(&self, row: &[String], col: usize) -> Result<Option<f64>> {
        if row[col].is_empty() {
            Ok(None)
        } else {
            self.f64(row, col).map(Some)
        }
    }

    pub fn i32(&self, row: &[String], col: usize) -> Result<i32> {
        row[col].parse::<i32>().map_err(|_| {
            Error::Table(format!(
                "bad integer {:?} in column {}",
                row[col], self.header[col]
            ))
        })
    }
}

/// Serializes rows under a header; all fields are already strings.
pub fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render(header, rows))?;
    Ok(())
}

/// Shortest round-trip float rendering shared by every writer.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        let text = "a,b,c\n1,2.5,x\n3,4.5,y\n";
        let t = Table::parse(text).unwrap();
        assert_eq!(t.header, vec!["a", "b", "c"]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.f64(&t.rows[0], t.col("b").unwrap()).unwrap(), 2.5);
        let rendered = render(
            &["a", "b", "c"],
            &t.rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        );
        assert_eq!(rendered, text);
    }

    #[test]
    fn ragged_row_is_an_error() {
        assert!(Table::parse("a,b\n1\n").is_err());
    }

    #[test]
    fn missing_field_is_none() {
        let t = Table::parse("a,b\n1,\n").unwrap();
        assert_eq!(t.opt_f64(&t.rows[0], 1).unwrap(), None);
    }
}
