//! Matrix files: UTF-8 CSV or TSV, optional single header row, one
//! observation per row.

use std::path::Path;

use mngl_core::{DMatrix, DataMatrix};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    /// `.tsv` and `.tab` are tab-separated; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("tsv") | Some("tab") => Format::Tsv,
            _ => Format::Csv,
        }
    }

    fn delimiter(&self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }
}

fn reader(path: &Path, format: Format) -> Result<csv::Reader<std::fs::File>> {
    if !path.is_file() {
        return Err(BenchError::Config(format!("no such data file: {}", path.display())));
    }
    csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => BenchError::io(path, io),
            other => BenchError::parse(path, format!("{other:?}")),
        })
}

/// Raw numeric rows; the first row is skipped when any of its cells is
/// non-numeric.
pub fn read_rows(path: &Path, format: Format) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in reader(path, format)?.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| BenchError::parse(path, format!("line {line}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if idx == 0 && rec.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    BenchError::parse(path, format!("non-numeric cell '{cell}' at line {line}, column {}", col + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(BenchError::parse(
                    path,
                    format!("ragged row at line {line}: {} fields, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path, format: Format) -> Result<DMatrix<f64>> {
    let rows = read_rows(path, format)?;
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Reads a data file as observations × variables, transposing first when
/// the file stores variables as rows.
pub fn ingest_matrix(path: &Path, format: Format, transpose: bool) -> Result<DataMatrix> {
    let m = read_matrix(path, format)?;
    let m = if transpose { m.transpose() } else { m };
    let (n, p) = m.shape();
    let x = DataMatrix::new(m).map_err(|e| BenchError::parse(path, e.to_string()))?;
    log::info!("ingested {}: n={n}, p={p}", path.display());
    Ok(x)
}

/// Writes a matrix as CSV with shortest round-trip float formatting.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::io(path, e.into()))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| BenchError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}
