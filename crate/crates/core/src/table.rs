//! Delimited-text plumbing shared by every loader and exporter.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Describes how a delimited input file is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFormat {
    pub delimiter: u8,
}

impl Default for TableFormat {
    fn default() -> Self {
        TableFormat { delimiter: b',' }
    }
}

impl TableFormat {
    pub fn tab_separated() -> Self {
        TableFormat { delimiter: b'\t' }
    }

    pub(crate) fn reader(&self, path: &Path) -> Result<csv::Reader<File>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .flexible(true)
            .trim(csv::Trim::Fields)
            .from_reader(file))
    }
}

/// A rejected input row. `row` is the 1-based data row index (the header is row 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub row: usize,
    pub column: String,
    pub reason: String,
}

impl RowIssue {
    pub fn new(row: usize, column: impl Into<String>, reason: impl Into<String>) -> Self {
        RowIssue {
            row,
            column: column.into(),
            reason: reason.into(),
        }
    }
}

/// Parsed rows together with the rows that were rejected.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RowIssue>,
}

/// Writes a reject report with columns `row,column,reason`.
pub fn write_rejects<W: Write>(out: W, rejects: &[RowIssue]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "column", "reason"])?;
    for r in rejects {
        w.write_record([r.row.to_string().as_str(), &r.column, &r.reason])?;
    }
    w.flush()
}

/// Column positions resolved from a header row.
pub(crate) struct Header {
    names: Vec<String>,
}

impl Header {
    pub(crate) fn new(record: &csv::StringRecord) -> Self {
        Header {
            names: record.iter().map(|h| h.trim().to_ascii_lowercase()).collect(),
        }
    }

    pub(crate) fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub(crate) fn require(&self, path: &Path, name: &str) -> Result<usize> {
        self.position(name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }
}

pub(crate) fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Formats a float with enough digits to round-trip, without locale or
/// platform dependence.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    format!("{v}")
}

/// Lowercases and drops everything but ASCII alphanumerics, so that
/// `"Non-Hispanic Black"`, `"non_hispanic_black"` and `"NonHispanicBlack"`
/// compare equal.
pub(crate) fn squash(s: &str) -> String {
    s.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}
