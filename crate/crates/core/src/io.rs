//! Small plain-text helpers shared by the file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Non-empty lines that are not `#` comments, with 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses exactly `n` numbers separated by `sep` (or whitespace when `sep` is `None`).
pub(crate) fn parse_fields(
    line: &str,
    sep: Option<char>,
    n: usize,
    path: &Path,
    lineno: usize,
) -> Result<Vec<f64>> {
    let fields: Vec<&str> = match sep {
        Some(c) => line.split(c).map(str::trim).collect(),
        None => line.split_whitespace().collect(),
    };
    if fields.len() != n {
        return Err(Error::parse(
            path.display(),
            lineno,
            format!("expected {n} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path.display(), lineno, format!("bad number `{f}`")))
        })
        .collect()
}

/// Checks a CSV header line against the expected column list.
pub(crate) fn expect_header(text: &str, header: &str, path: &Path) -> Result<()> {
    let first = text.lines().next().unwrap_or("").trim();
    if first != header {
        return Err(Error::parse(
            path.display(),
            1,
            format!("expected header `{header}`, found `{first}`"),
        ));
    }
    Ok(())
}

/// Flat `key = value` file; `#` starts a comment line.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in data_lines(text) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path.display(), lineno, "expected `key = value`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::InvalidConfigValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// Joins numbers with `sep` using shortest round-trip formatting.
pub(crate) fn join(values: &[f64], sep: &str) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push_str(sep);
        }
        let _ = write!(s, "{v}");
    }
    s
}
