//! Headerless numeric CSV input.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// One observation vector per row.
pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read data {}: {e}", path.display())))?;
    parse_rows(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_rows(text: &str) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Parse(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| parse_value(f).map_err(|m| CliError::Parse(format!("line {line}: {m}"))))
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_value(field: &str) -> Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("{field:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{field:?} is not finite"))
    }
}

/// A single observation vector: either one row or one column.
pub fn as_vector(rows: Vec<Vec<f64>>) -> CliResult<Vec<f64>> {
    match rows.len() {
        0 => Err(CliError::Parse("data file holds no values".into())),
        1 => Ok(rows.into_iter().next().unwrap()),
        _ if rows.iter().all(|r| r.len() == 1) => Ok(rows.into_iter().flatten().collect()),
        _ => Err(CliError::Parse(
            "expected one observation vector as a single row or a single column".into(),
        )),
    }
}

/// Observations with a common dimension.
pub fn check_uniform(rows: &[Vec<f64>]) -> CliResult<usize> {
    let dim = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(CliError::Parse(format!(
                "observation {} has {} values, expected {dim}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(dim)
}
