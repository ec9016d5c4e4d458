//! Plain-text matrix files.
//!
//! Matrices are written as CSV with one matrix row per line and no header;
//! `%` starts a comment line. Compound files (datasets, fitted parameters,
//! system descriptions) are a `key=value` header, a blank line, then matrix
//! blocks each introduced by an upper-case label on its own line.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Writes one matrix as CSV rows.
pub fn write_matrix_csv(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(r, c)]);
        }
        out.push('\n');
    }
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(i, field)| {
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("field {}: {e} ({:?})", i + 1, field.trim()),
            })
        })
        .collect()
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, first_line: usize, label: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Parse {
            line: first_line,
            msg: format!("{label}: empty matrix"),
        });
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::Integrity(format!(
                "{label}: row {} has {} columns, expected {ncols}",
                i + 1,
                r.len()
            )));
        }
    }
    let nrows = rows.len();
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.into_iter().flatten(),
    ))
}

/// Parses a standalone CSV matrix; dimensions are inferred.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    let mut first = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if rows.is_empty() {
            first = i + 1;
        }
        rows.push(parse_row(line, i + 1)?);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no matrix rows".into(),
        });
    }
    rows_to_matrix(rows, first, "matrix")
}

/// Header plus labeled matrix blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledFile {
    pub header: BTreeMap<String, String>,
    /// Header keys in file order, for stable output.
    pub header_order: Vec<String>,
    pub blocks: Vec<(String, DMatrix<f64>)>,
}

impl LabeledFile {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        if !self.header.contains_key(key) {
            self.header_order.push(key.to_string());
        }
        self.header.insert(key.to_string(), value.to_string());
    }

    pub fn push_block(&mut self, label: &str, m: DMatrix<f64>) {
        self.blocks.push((label.to_string(), m));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in &self.header_order {
            let _ = writeln!(out, "{k}={}", self.header[k]);
        }
        for (label, m) in &self.blocks {
            out.push('\n');
            out.push_str(label);
            out.push('\n');
            write_matrix_csv(&mut out, m);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut file = LabeledFile::default();
        let mut lines = text.lines().enumerate().peekable();

        // header until the first blank line
        let mut saw_header = false;
        while let Some((i, raw)) = lines.peek().copied() {
            let line = raw.trim();
            if line.starts_with('%') {
                lines.next();
                continue;
            }
            if line.is_empty() {
                lines.next();
                if saw_header {
                    break;
                }
                continue;
            }
            if is_label(line) {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, found {line:?}"),
            })?;
            file.set(k.trim(), v.trim());
            saw_header = true;
            lines.next();
        }

        let mut current: Option<(String, usize, Vec<Vec<f64>>)> = None;
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            if is_label(line) {
                if let Some((label, first, rows)) = current.take() {
                    let m = rows_to_matrix(rows, first, &label)?;
                    file.blocks.push((label, m));
                }
                current = Some((line.to_string(), i + 1, Vec::new()));
                continue;
            }
            let Some((_, _, rows)) = current.as_mut() else {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "matrix row before any block label".into(),
                });
            };
            rows.push(parse_row(line, i + 1)?);
        }
        if let Some((label, first, rows)) = current.take() {
            let m = rows_to_matrix(rows, first, &label)?;
            file.blocks.push((label, m));
        }
        if file.header.is_empty() && file.blocks.is_empty() {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file".into(),
            });
        }
        Ok(file)
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing header key `{key}`"),
            })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get_str(key)?;
        raw.parse::<T>().map_err(|e| Error::Parse {
            line: 0,
            msg: format!("header key `{key}`: {e} ({raw:?})"),
        })
    }

    pub fn block(&self, label: &str) -> Result<&DMatrix<f64>> {
        self.blocks
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing block `{label}`"),
            })
    }
}

fn is_label(line: &str) -> bool {
    line.chars().next().is_some_and(|c| c.is_ascii_uppercase())
        && line
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}
