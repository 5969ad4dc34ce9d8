//! Square matrices as headerless CSV, one row per line.
//!
//! Real-valued matrices are written with Rust's shortest round-trip float
//! formatting, so reading a file back reproduces the exact bit patterns.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

/// A dense square matrix as read from CSV; not necessarily symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl SquareMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }
}

pub fn write_matrix_csv(path: &Path, dim: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), dim * dim);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    for row in values.chunks(dim) {
        w.write_record(row.iter().map(|v| format!("{v}")))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_mask_csv(path: &Path, dim: usize, bits: &[bool]) -> Result<()> {
    assert_eq!(bits.len(), dim * dim);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    for row in bits.chunks(dim) {
        w.write_record(row.iter().map(|&b| if b { "1" } else { "0" }))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<SquareMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::format(
                        "matrix CSV",
                        format!("{}: bad number {field:?}", path.display()),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let dim = rows.len();
    if dim == 0 {
        return Err(Error::format(
            "matrix CSV",
            format!("{}: empty", path.display()),
        ));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "{}: matrix is not square (row {i} has {} columns, expected {dim})",
            path.display(),
            row.len()
        )));
    }
    Ok(SquareMatrix {
        dim,
        values: rows.into_iter().flatten().collect(),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format("matrix CSV", format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let values = vec![
            0.1,
            1.0 / 3.0,
            -2.5e-17,
            7.0,
            1e300,
            f64::MIN_POSITIVE,
            0.0,
            -1.0,
            3.0,
        ];
        write_matrix_csv(&path, 3, &values).unwrap();
        let m = read_matrix_csv(&path).unwrap();
        assert_eq!(m.dim, 3);
        for (a, b) in m.values.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn non_square_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "1,2,3\n4,5,6\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&path),
            Err(Error::InvalidInput(_))
        ));
    }
}
