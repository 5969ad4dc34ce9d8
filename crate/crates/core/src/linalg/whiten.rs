//! Closed-form whitening through the eigendecomposition of the covariance.

use super::{compute_covariance, compute_mean, sym_eigen, CovarianceMatrix, FeatureMap};
use crate::error::{Error, Result};

/// Eigenvalues at or below `RANK_TOL * λ_max` count as null.
pub const RANK_TOL: f64 = 1e-10;

/// How [`inverse_sqrt`] treats the null space of a rank-deficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMode {
    /// Null eigenvalues are an error.
    #[default]
    Strict,
    /// Null eigenvalues get a zero in `Λ^{-1/2}` (pseudo-inverse square root).
    Lenient,
}

/// `Q Λ^{-1/2} Qᵀ` for a symmetric PSD matrix.
pub fn inverse_sqrt(m: &CovarianceMatrix, mode: RankMode) -> Result<CovarianceMatrix> {
    let eig = sym_eigen(m)?;
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = RANK_TOL * lambda_max;
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| lambda_max > 0.0 && l > cutoff)
        .count();
    if mode == RankMode::Strict && rank < m.dim() {
        return Err(Error::RankDeficient { rank, dim: m.dim() });
    }
    Ok(eig.reconstruct_with(|l| {
        if lambda_max > 0.0 && l > cutoff {
            1.0 / l.sqrt()
        } else {
            0.0
        }
    }))
}

/// `X̃ = Σ_μ^{-1/2} (X - μ1ᵀ)`; the output has identity covariance on the
/// non-null eigenspace of `Σ_μ`.
pub fn whiten(x: &FeatureMap, mode: RankMode) -> Result<FeatureMap> {
    let mu = compute_mean(x);
    let cov = compute_covariance(x, &mu)?;
    let w = inverse_sqrt(&cov, mode)?;
    let (c, h, wd) = x.dims();
    let n = x.spatial();
    let m = mu.as_slice();
    let mut out = vec![0.0; c * n];
    for i in 0..c {
        let row = &mut out[i * n..(i + 1) * n];
        for (k, &mk) in m.iter().enumerate() {
            let wik = w.get(i, k);
            if wik == 0.0 {
                continue;
            }
            for (o, v) in row.iter_mut().zip(x.channel(k)) {
                *o += wik * (v - mk);
            }
        }
    }
    FeatureMap::new(c, h, wd, out)
}
