//! CSV ingestion and atomic output.
//!
//! Inputs carry one header row followed by numeric rows of equal width.
//! Rows are reported one-based counting data rows only, so "row 3" is the
//! third line after the header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::hdtrd::Dataset;
use crate::transfer::Sample;

/// Fewest data rows any layout accepts.
pub const MIN_ROWS: usize = 4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: file not found", .path.display())]
    Missing { path: PathBuf },
    #[error("{}: {message}", .path.display())]
    Read { path: PathBuf, message: String },
    #[error("{}: no header row", .path.display())]
    NoHeader { path: PathBuf },
    #[error("{}: row {row} has {found} fields, expected {expected}", .path.display())]
    Ragged { path: PathBuf, row: usize, expected: usize, found: usize },
    #[error("{}: row {row}, column {column}: {}", .path.display(), describe_cell(.value))]
    NonNumeric { path: PathBuf, row: usize, column: usize, value: String },
    #[error("{}: {found} data rows, need at least {min}", .path.display())]
    TooFewRows { path: PathBuf, found: usize, min: usize },
    #[error("{}: {message}", .path.display())]
    Layout { path: PathBuf, message: String },
}

fn describe_cell(value: &str) -> String {
    if value.is_empty() {
        "blank cell".into()
    } else {
        format!("`{value}` is not a finite number")
    }
}

/// How the columns of a file are split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `y`, then `p1` tested columns, then controls.
    Test { p1: usize },
    /// `y`, then covariates.
    Source,
    /// A bare numeric matrix.
    Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Test(Dataset),
    Source(Sample),
    Matrix(DMatrix<f64>),
}

/// Header and numeric rows, with every shape diagnostic applied.
pub fn read_numeric(path: &Path) -> Result<(Vec<String>, DMatrix<f64>), IngestError> {
    let owned = || path.to_path_buf();
    if !path.is_file() {
        return Err(IngestError::Missing { path: owned() });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::Read { path: owned(), message: e.to_string() })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Read { path: owned(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(IngestError::NoHeader { path: owned() });
    }
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::Read { path: owned(), message: e.to_string() })?;
        if record.len() != width {
            return Err(IngestError::Ragged { path: owned(), row, expected: width, found: record.len() });
        }
        for (j, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(IngestError::NonNumeric { path: owned(), row, column: j + 1, value: cell.to_string() });
                }
            }
        }
        rows += 1;
    }
    if rows < MIN_ROWS {
        return Err(IngestError::TooFewRows { path: owned(), found: rows, min: MIN_ROWS });
    }
    Ok((header, DMatrix::from_row_slice(rows, width, &values)))
}

pub fn ingest_csv(path: &Path, layout: Layout) -> Result<Ingested, IngestError> {
    ingest_csv_with(path, layout, false)
}

/// [`ingest_csv`], optionally subtracting every column's mean first. The
/// models carry no intercept, so uncentered data should be centered here.
pub fn ingest_csv_with(path: &Path, layout: Layout, center: bool) -> Result<Ingested, IngestError> {
    let (_, mut m) = read_numeric(path)?;
    if center {
        for mut col in m.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    let layout_err = |message: String| IngestError::Layout { path: path.to_path_buf(), message };
    let split_y = |m: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>), IngestError> {
        if m.ncols() < 2 {
            return Err(layout_err(format!("need a response and at least one covariate, got {} columns", m.ncols())));
        }
        Ok((m.column(0).into_owned(), m.columns(1, m.ncols() - 1).into_owned()))
    };
    match layout {
        Layout::Matrix => Ok(Ingested::Matrix(m)),
        Layout::Source => {
            let (y, x) = split_y(&m)?;
            Ok(Ingested::Source(Sample::new(y, x).map_err(|e| layout_err(e.to_string()))?))
        }
        Layout::Test { p1 } => {
            let (y, w) = split_y(&m)?;
            if p1 == 0 || p1 > w.ncols() {
                return Err(layout_err(format!("--p1 {p1} does not fit {} covariate columns", w.ncols())));
            }
            let x = w.columns(0, p1).into_owned();
            let z = w.columns(p1, w.ncols() - p1).into_owned();
            Ok(Ingested::Test(Dataset::new(y, x, z).map_err(|e| layout_err(e.to_string()))?))
        }
    }
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// CSV text with the shortest decimal form that parses back to the same
/// double.
pub fn matrix_csv(header: &[String], m: &DMatrix<f64>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
