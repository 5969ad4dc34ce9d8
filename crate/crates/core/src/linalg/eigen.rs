//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use super::CovarianceMatrix;
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 100;
/// Convergence when `off(A) <= CONVERGENCE_TOL * ‖A‖_F`.
pub const CONVERGENCE_TOL: f64 = 1e-12;

/// `A = Q Λ Qᵀ` with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Row-major `C×C`; column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Vec<f64>,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Q f(Λ) Qᵀ`, mirrored to exact symmetry.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CovarianceMatrix {
        let n = self.dim();
        let q = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        CovarianceMatrix::from_upper(n, |i, j| {
            (0..n)
                .map(|k| q[i * n + k] * mapped[k] * q[j * n + k])
                .sum()
        })
    }

    pub fn reconstruct(&self) -> CovarianceMatrix {
        self.reconstruct_with(|l| l)
    }

    /// `‖QᵀQ - I‖_F`
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim();
        let q = &self.eigenvectors;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let d: f64 = (0..n).map(|k| q[k * n + a] * q[k * n + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                acc += (d - target) * (d - target);
            }
        }
        acc.sqrt()
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Full eigendecomposition by cyclic Jacobi rotations in row-major `(p, q)` order.
///
/// Deterministic for identical input. Fails with [`Error::NoConvergence`] if the
/// off-diagonal mass has not dropped below tolerance after [`MAX_SWEEPS`].
pub fn sym_eigen(m: &CovarianceMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    let mut a = m.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.frobenius_norm();
    let target = CONVERGENCE_TOL * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, n);
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[row * n + col] = v[row * n + src];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}
