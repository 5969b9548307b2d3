//! Plain-text matrix formats: a whitespace format with an `M N` header line,
//! and CSV. Values are written with 17 significant digits so both formats
//! round-trip f64 losslessly.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::matrix::DenseMatrix;

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn fmt_value(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Writes the header line `M N` followed by one whitespace-separated row per
/// line.
pub fn write_matrix_text(path: &Path, m: &DenseMatrix) -> Result<(), MatrixIoError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_value(m[(i, j)])).collect();
        writeln!(f, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix_text(path: &Path) -> Result<DenseMatrix, MatrixIoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (line_no, header) = lines.next().ok_or(MatrixIoError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| MatrixIoError::Parse {
                line: line_no + 1,
                message: format!("bad dimension {t:?}"),
            })
        })
        .collect::<Result<_, _>>()?;
    if dims.len() != 2 {
        return Err(MatrixIoError::Parse {
            line: 1,
            message: "header must be two integers".into(),
        });
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut filled = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if filled >= rows {
            return Err(MatrixIoError::Parse {
                line: line_no + 1,
                message: "more rows than the header declares".into(),
            });
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| MatrixIoError::Parse {
                    line: line_no + 1,
                    message: format!("bad number {t:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != cols {
            return Err(MatrixIoError::Parse {
                line: line_no + 1,
                message: format!("expected {cols} columns, found {}", values.len()),
            });
        }
        for (j, v) in values.into_iter().enumerate() {
            out[(filled, j)] = v;
        }
        filled += 1;
    }
    if filled != rows {
        return Err(MatrixIoError::Parse {
            line: filled + 1,
            message: format!("expected {rows} rows, found {filled}"),
        });
    }
    Ok(out)
}

/// Writes one CSV row per matrix row, no header.
pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<(), MatrixIoError> {
    let mut f = fs::File::create(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_value(m[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix, MatrixIoError> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim().parse().map_err(|_| MatrixIoError::Parse {
                    line: line_no + 1,
                    message: format!("bad number {t:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(MatrixIoError::Parse {
                    line: line_no + 1,
                    message: "ragged rows".into(),
                });
            }
        }
        rows.push(values);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DenseMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
