use crate::error::{Error, Result};

/// Maximum tolerated `|a_ij - a_ji|` for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Per-channel mean of a feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    values: Vec<f64>,
}

impl MeanVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Dense `C×C` symmetric matrix, row-major.
///
/// Holds channel covariances (raw or standardized), their inverse square
/// roots, and the sensitivity variance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl CovarianceMatrix {
    /// Validating constructor; rejects non-square, non-finite or asymmetric input.
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "matrix dimension must be positive".into(),
            ));
        }
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{dim}x{dim} matrix needs {} values, got {}",
                dim * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix".into()));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (values[i * dim + j], values[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(
                "matrix rows must all have length C".into(),
            ));
        }
        Self::new(dim, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.values[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.values[i * diag.len() + i] = d;
        }
        m
    }

    /// Builds from an upper triangle computed by `f(i, j)` for `i <= j`,
    /// mirrored so the result is exactly symmetric.
    pub(crate) fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                values[i * dim + j] = v;
                values[j * dim + i] = v;
            }
        }
        Self { dim, values }
    }

    /// Symmetrizes a general square buffer by averaging mirrored entries.
    #[cfg(test)]
    pub(crate) fn symmetrized(dim: usize, mut values: Vec<f64>) -> Self {
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = 0.5 * (values[i * dim + j] + values[j * dim + i]);
                values[i * dim + j] = v;
                values[j * dim + i] = v;
            }
        }
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &CovarianceMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "frobenius_distance: dims differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Entries `(i, j)` with `i < j`, row-major.
    pub fn strict_upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim.saturating_sub(1)) / 2);
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Mean of `|entry|` over the strict upper triangle; 0 for `C = 1`.
    pub fn mean_abs_off_diagonal(&self) -> f64 {
        let upper = self.strict_upper();
        if upper.is_empty() {
            0.0
        } else {
            upper.iter().map(|v| v.abs()).sum::<f64>() / upper.len() as f64
        }
    }

    /// Dense product `self · other`.
    pub fn matmul(&self, other: &CovarianceMatrix) -> Vec<f64> {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.values[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.values[k * n + j];
                }
            }
        }
        out
    }
}
