//! CSV ingestion.
//!
//! Scores files carry a `score` column, features files the columns
//! `x1, …, xd`, and joint files both. Candidate files (per-row scores of every
//! candidate label) use `c1, …, cK`. Errors name the file and line.

use std::path::Path;

use drci_core::TabularDataset;

use crate::error::{CliError, CliResult};

/// A parsed numeric CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{name}: {e}")))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{name}:1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Input(format!("{name}:{line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Input(format!(
                    "{name}:{line}: column `{}` is not a finite number: `{field}`",
                    headers[j]
                ))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{name}: no data rows")));
    }
    Ok(Table { headers, rows })
}

/// Indices of the columns `{prefix}1, {prefix}2, …` in order.
fn numbered_columns(table: &Table, prefix: &str, path: &Path) -> CliResult<Vec<usize>> {
    let mut cols = Vec::new();
    while let Some(j) = table.headers.iter().position(|h| *h == format!("{prefix}{}", cols.len() + 1)) {
        cols.push(j);
    }
    let stray = table.headers.iter().filter(|h| h.starts_with(prefix) && h[prefix.len()..].parse::<usize>().is_ok()).count();
    if cols.is_empty() || stray != cols.len() {
        return Err(CliError::Input(format!(
            "{}:1: expected columns {prefix}1, {prefix}2, … numbered without gaps",
            path.display()
        )));
    }
    Ok(cols)
}

fn score_column(table: &Table, path: &Path) -> CliResult<usize> {
    table
        .headers
        .iter()
        .position(|h| h == "score")
        .ok_or_else(|| CliError::Input(format!("{}:1: no `score` column", path.display())))
}

pub fn load_scores(path: &Path) -> CliResult<Vec<f64>> {
    let table = read_table(path)?;
    let j = score_column(&table, path)?;
    Ok(table.rows.iter().map(|r| r[j]).collect())
}

pub fn load_features(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    numbered_rows(path, "x")
}

pub fn load_candidates(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    numbered_rows(path, "c")
}

fn numbered_rows(path: &Path, prefix: &str) -> CliResult<Vec<Vec<f64>>> {
    let table = read_table(path)?;
    let cols = numbered_columns(&table, prefix, path)?;
    Ok(table.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect())
}

/// Features and scores from a joint file, or from separate files.
pub fn load_dataset(data: Option<&Path>, features: Option<&Path>, scores: Option<&Path>) -> CliResult<TabularDataset> {
    let (rows, scores) = match (data, features, scores) {
        (Some(path), None, None) => {
            let table = read_table(path)?;
            let cols = numbered_columns(&table, "x", path)?;
            let s = score_column(&table, path)?;
            let rows = table.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect();
            (rows, table.rows.iter().map(|r| r[s]).collect::<Vec<f64>>())
        }
        (None, Some(f), Some(s)) => {
            let rows = load_features(f)?;
            let scores = load_scores(s)?;
            if rows.len() != scores.len() {
                return Err(CliError::Input(format!(
                    "{} has {} rows but {} has {}",
                    f.display(),
                    rows.len(),
                    s.display(),
                    scores.len()
                )));
            }
            (rows, scores)
        }
        _ => return Err(CliError::Usage("give either --data, or both --features and --scores".into())),
    };
    TabularDataset::from_rows(&rows, scores).map_err(|e| CliError::Input(e.to_string()))
}

/// Comma-separated finite numbers.
pub fn parse_list(text: &str, flag: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| match t.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CliError::Usage(format!("--{flag}: `{}` is not a finite number", t.trim()))),
        })
        .collect()
}
