//! CSV ingestion and result files.

use std::fs;
use std::path::Path;

use lapgraph::{EdgeSet, SampleMatrix};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// Samples plus the column names when the file had a header row.
#[derive(Debug, Clone)]
pub struct SampleTable {
    pub samples: SampleMatrix,
    pub names: Option<Vec<String>>,
}

/// Reads observations (rows) by variables (columns). A first row with any
/// non-numeric cell is taken as a header.
pub fn read_samples(path: &Path) -> CliResult<SampleTable> {
    let (rows, names) = read_numeric_csv(path, true)?;
    let samples = SampleMatrix::from_rows(&rows).map_err(|e| CliError::parse(path, e.to_string()))?;
    Ok(SampleTable { samples, names })
}

/// Reads a headerless numeric matrix, e.g. one written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let (rows, _) = read_numeric_csv(path, false)?;
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

type Rows = Vec<Vec<f64>>;

fn read_numeric_csv(path: &Path, allow_header: bool) -> CliResult<(Rows, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Rows = Vec::new();
    let mut names = None;
    let mut width = None;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(index as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if rows.is_empty() && names.is_none() && allow_header && parsed.iter().any(Option::is_none) {
            names = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CliError::parse(
                path,
                format!("line {line} has {} fields, expected {expected}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(expected);
        for (col, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Some(v) => row.push(v),
                None => {
                    return Err(CliError::parse(
                        path,
                        format!("line {line}, column {}: cannot parse {cell:?} as a number", col + 1),
                    ))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, "no numeric rows"));
    }
    Ok((rows, names))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::parse(path, format!("{other:?}")),
    }
}

/// Headerless CSV; `{}` formatting is shortest round-trip, so reading the
/// file back gives the same bits.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `i,j,weight` with 1-based indices in ascending order.
pub fn write_edges(path: &Path, edges: &EdgeSet, weights: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["i", "j", "weight"]).map_err(|e| csv_error(path, e))?;
    for (i, j) in edges.iter() {
        w.write_record([(i + 1).to_string(), (j + 1).to_string(), weights[(i, j)].to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `index,name` for labelled inputs.
pub fn write_names(path: &Path, names: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["index", "name"]).map_err(|e| csv_error(path, e))?;
    for (k, name) in names.iter().enumerate() {
        w.write_record([(k + 1).to_string(), name.clone()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
