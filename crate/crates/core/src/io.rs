//! Plain-text matrix and vector files: one row per line, comma-separated
//! values, blank lines and `#` comment lines ignored. Values are written in
//! the shortest form that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Shortest round-trip rendering; scientific notation outside `[1e-4, 1e16)`.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses delimited rows; each row keeps its source line number.
pub fn parse_rows(path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        let mut offset = 0;
        for field in line.split(',') {
            let lead = field.len() - field.trim_start().len();
            let token = field.trim();
            let value = token.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                column: offset + lead + 1,
                message: format!("cannot parse {token:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    column: offset + lead + 1,
                    message: format!("non-finite value {token:?}"),
                });
            }
            row.push(value);
            offset += field.len() + 1;
        }
        rows.push((lineno + 1, row));
    }
    let width = rows.first().map(|(_, r)| r.len()).unwrap_or(0);
    if let Some((line, r)) = rows.iter().find(|(_, r)| r.len() != width) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            column: 1,
            message: format!("row has {} values, expected {width}", r.len()),
        });
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let rows = parse_rows(path, &read_text(path)?)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "no matrix rows".into(),
        });
    }
    if rows.len() != rows[0].len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: format!("matrix is {}x{}, expected square", rows.len(), rows[0].len()),
        });
    }
    Matrix::from_rows(&rows)
}

/// Reads a vector written either as one row or as one value per line.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = parse_rows(path, &read_text(path)?)?;
    match rows.as_slice() {
        [] => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "no values".into(),
        }),
        [single] => Ok(single.clone()),
        many if many.iter().all(|r| r.len() == 1) => Ok(many.iter().map(|r| r[0]).collect()),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "expected a single row or a single column".into(),
        }),
    }
}

pub fn render_rows<'a>(comments: &[String], rows: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for row in rows {
        let line: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_matrix(path: &Path, matrix: &Matrix, comments: &[String]) -> Result<()> {
    write_text(path, &render_rows(comments, matrix.rows()))
}

pub fn write_vector(path: &Path, values: &[f64], comments: &[String]) -> Result<()> {
    write_text(path, &render_rows(comments, [values]))
}
