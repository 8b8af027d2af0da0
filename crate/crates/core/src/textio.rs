//! Plain-text numeric I/O shared by the dataset, model and report formats.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile {
            path: path.to_path_buf(),
        }),
        Err(source) => Err(Error::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_string(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::data(path, Some(e.line()), e.to_string()))
}

/// Non-empty lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads a headerless comma-separated real matrix. Every row must have
/// `cols` fields (when given) and every value must be finite.
pub fn read_matrix_csv(path: &Path, cols: Option<usize>) -> Result<Array2<f64>> {
    let text = read_to_string(path)?;
    let mut values = Vec::new();
    let mut width = cols;
    let mut rows = 0;
    for (line_no, line) in data_lines(&text) {
        let start = values.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::data(path, Some(line_no), format!("not a number: {:?}", field.trim())))?;
            if !v.is_finite() {
                return Err(Error::data(path, Some(line_no), "non-finite value"));
            }
            values.push(v);
        }
        let n = values.len() - start;
        match width {
            Some(w) if w != n => {
                return Err(Error::data(
                    path,
                    Some(line_no),
                    format!("column count mismatch: expected {w}, found {n}"),
                ))
            }
            None => width = Some(n),
            _ => {}
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, width), values).expect("consistent row widths"))
}

/// Writes one row per line using the shortest text that parses back to the
/// same `f64`.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_string(path, &out)
}

/// Reads one signed integer per line.
pub fn read_int_column(path: &Path) -> Result<Vec<i64>> {
    let text = read_to_string(path)?;
    data_lines(&text)
        .map(|(line_no, line)| {
            line.trim()
                .parse::<i64>()
                .map_err(|_| Error::data(path, Some(line_no), format!("not an integer: {:?}", line.trim())))
        })
        .collect()
}

pub fn write_int_column(path: &Path, values: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 4);
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    write_string(path, &out)
}
