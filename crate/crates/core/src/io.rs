//! CSV ingestion for reference samples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column selector: by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSel {
    Index(usize),
    Name(String),
}

impl Default for ColumnSel {
    fn default() -> Self {
        ColumnSel::Index(0)
    }
}

impl std::str::FromStr for ColumnSel {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSel::Index(i),
            Err(_) => ColumnSel::Name(s.to_string()),
        })
    }
}

fn split_fields(line: &str) -> Vec<String> {
    line.split(',')
        .map(|f| f.trim().trim_matches('"').to_string())
        .collect()
}

/// Load one numeric column as an ordered vector of finite positive reals.
///
/// The first row is treated as a header when its selected field does not
/// parse as a number. Rows with missing or unparseable values and values
/// that the gamma tilt cannot accept (x <= 0) are reported with their
/// 1-based line numbers.
pub fn load_reference_csv(path: &Path, column: &ColumnSel) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(Error::InvalidSample(format!(
            "{}: file is empty",
            path.display()
        )));
    }
    let header_fields = split_fields(lines[0]);
    let col_idx = match column {
        ColumnSel::Index(i) => *i,
        ColumnSel::Name(name) => header_fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| {
                Error::InvalidSample(format!(
                    "{}: no column named {name:?} in header {header_fields:?}",
                    path.display()
                ))
            })?,
    };
    let first_is_header = match header_fields.get(col_idx) {
        Some(f) => f.parse::<f64>().is_err(),
        None => true,
    };
    let start = usize::from(first_is_header);

    let mut values = Vec::new();
    let mut bad_lines: Vec<(usize, String)> = Vec::new();
    let mut nonpositive_lines: Vec<usize> = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(start) {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(line);
        let field = fields.get(col_idx).map(String::as_str).unwrap_or("");
        if field.is_empty() {
            bad_lines.push((lineno, "missing value".into()));
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                if v <= 0.0 {
                    nonpositive_lines.push(lineno);
                } else {
                    values.push(v);
                }
            }
            Ok(v) => bad_lines.push((lineno, format!("non-finite value {v}"))),
            Err(_) => bad_lines.push((lineno, format!("cannot parse {field:?}"))),
        }
    }
    if let Some((lineno, why)) = bad_lines.first() {
        return Err(Error::InvalidSample(format!(
            "{}: line {lineno}: {why} ({} bad rows total)",
            path.display(),
            bad_lines.len()
        )));
    }
    if !nonpositive_lines.is_empty() {
        let shown: Vec<usize> = nonpositive_lines.iter().take(8).copied().collect();
        return Err(Error::InvalidSample(format!(
            "{}: nonpositive values (gamma tilt requires x > 0) at lines {shown:?}{}",
            path.display(),
            if nonpositive_lines.len() > 8 {
                " ..."
            } else {
                ""
            }
        )));
    }
    if values.is_empty() {
        return Err(Error::InvalidSample(format!(
            "{}: no usable rows",
            path.display()
        )));
    }
    Ok(values)
}
