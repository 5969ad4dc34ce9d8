//! First and second order channel statistics and instance standardization.

use super::{CovarianceMatrix, FeatureMap, MeanVector};
use crate::error::{Error, Result};

/// Variance floor for instance standardization.
pub const STANDARDIZE_EPS: f64 = 1e-5;

pub fn compute_mean(x: &FeatureMap) -> MeanVector {
    let n = x.spatial() as f64;
    MeanVector::new(
        (0..x.channels())
            .map(|c| x.channel(c).iter().sum::<f64>() / n)
            .collect(),
    )
}

/// Population covariance `(1/HW)(X - μ1ᵀ)(X - μ1ᵀ)ᵀ`.
pub fn compute_covariance(x: &FeatureMap, mu: &MeanVector) -> Result<CovarianceMatrix> {
    if mu.len() != x.channels() {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} entries for a {}-channel feature map",
            mu.len(),
            x.channels()
        )));
    }
    let n = x.spatial();
    let m = mu.as_slice();
    let centered: Vec<Vec<f64>> = (0..x.channels())
        .map(|c| x.channel(c).iter().map(|v| v - m[c]).collect())
        .collect();
    Ok(gram(&centered, n))
}

/// `(1/n) A Aᵀ` for row vectors `A`, computed on the upper triangle only.
fn gram(rows: &[Vec<f64>], n: usize) -> CovarianceMatrix {
    let inv = 1.0 / n as f64;
    CovarianceMatrix::from_upper(rows.len(), |i, j| dot(&rows[i], &rows[j]) * inv)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Output of [`standardize_with_cache`]; keeps what the backward pass needs.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub output: FeatureMap,
    /// `1 / sqrt(max(var_c, eps))` per channel.
    pub inv_std: Vec<f64>,
    /// Channels whose variance fell at or below the floor. Their scale is
    /// treated as a constant by the backward pass.
    pub floored: Vec<bool>,
}

/// Per-channel zero-mean, unit-variance rescaling (no affine parameters).
///
/// Variance is floored at [`STANDARDIZE_EPS`]; constant channels map to zero.
pub fn standardize(x: &FeatureMap) -> FeatureMap {
    standardize_with_cache(x).output
}

pub fn standardize_with_cache(x: &FeatureMap) -> Standardized {
    let (c, h, w) = x.dims();
    let n = x.spatial() as f64;
    let mut out = Vec::with_capacity(x.as_slice().len());
    let mut inv_std = Vec::with_capacity(c);
    let mut floored = Vec::with_capacity(c);
    for ch in 0..c {
        let data = x.channel(ch);
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is_floored = var <= STANDARDIZE_EPS;
        let r = 1.0 / var.max(STANDARDIZE_EPS).sqrt();
        out.extend(data.iter().map(|v| (v - mean) * r));
        inv_std.push(r);
        floored.push(is_floored);
    }
    Standardized {
        output: FeatureMap::from_raw(c, h, w, out),
        inv_std,
        floored,
    }
}

/// Pulls `∂L/∂X_s` back to `∂L/∂X` through the standardization, including
/// the dependence of the mean and variance on the input.
pub fn standardize_backward(cache: &Standardized, grad_out: &FeatureMap) -> FeatureMap {
    let xs = &cache.output;
    assert!(xs.same_dims(grad_out), "standardize_backward: dims differ");
    let (c, h, w) = xs.dims();
    let n = xs.spatial() as f64;
    let mut out = Vec::with_capacity(xs.as_slice().len());
    for ch in 0..c {
        let g = grad_out.channel(ch);
        let y = xs.channel(ch);
        let r = cache.inv_std[ch];
        let g_mean = g.iter().sum::<f64>() / n;
        if cache.floored[ch] {
            out.extend(g.iter().map(|gi| r * (gi - g_mean)));
        } else {
            let gy_mean = dot(g, y) / n;
            out.extend(
                g.iter()
                    .zip(y)
                    .map(|(gi, yi)| r * (gi - g_mean - yi * gy_mean)),
            );
        }
    }
    FeatureMap::from_raw(c, h, w, out)
}

/// Covariance of the standardized map, `(1/HW) X_s X_sᵀ`.
pub fn standardized_covariance(x: &FeatureMap) -> CovarianceMatrix {
    covariance_of_standardized(&standardize(x))
}

/// Second-moment matrix of an already standardized (zero-mean) map.
pub fn covariance_of_standardized(xs: &FeatureMap) -> CovarianceMatrix {
    let rows: Vec<Vec<f64>> = (0..xs.channels()).map(|c| xs.channel(c).to_vec()).collect();
    gram(&rows, xs.spatial())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel() -> FeatureMap {
        FeatureMap::from_channels(1, 2, &[&[1.0, 3.0], &[-2.0, 2.0]]).unwrap()
    }

    #[test]
    fn mean_of_constant_and_zero_maps() {
        let x = FeatureMap::filled(2, 3, 3, 3.5);
        assert_eq!(compute_mean(&x).as_slice(), &[3.5, 3.5]);
        let z = FeatureMap::zeros(4, 2, 2);
        assert_eq!(compute_mean(&z).as_slice(), &[0.0; 4]);
    }

    #[test]
    fn mean_small_case() {
        assert_eq!(compute_mean(&two_channel()).as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn covariance_small_case() {
        let x = two_channel();
        let cov = compute_covariance(&x, &compute_mean(&x)).unwrap();
        assert_eq!(cov.as_slice(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn covariance_of_constant_is_zero() {
        let x = FeatureMap::filled(3, 4, 4, -1.25);
        let cov = compute_covariance(&x, &compute_mean(&x)).unwrap();
        assert!(cov.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_rejects_wrong_mean() {
        let x = two_channel();
        let err = compute_covariance(&x, &MeanVector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn standardize_small_case() {
        let x = FeatureMap::from_channels(1, 2, &[&[1.0, 3.0]]).unwrap();
        let s = standardize(&x);
        assert_eq!(s.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_constant_channel_is_zero() {
        let x = FeatureMap::from_channels(1, 3, &[&[2.0, 2.0, 2.0], &[0.0, 1.0, 5.0]]).unwrap();
        let cache = standardize_with_cache(&x);
        assert_eq!(cache.output.channel(0), &[0.0, 0.0, 0.0]);
        assert!(cache.floored[0]);
        assert!(!cache.floored[1]);
    }

    #[test]
    fn correlated_pair_has_unit_off_diagonal() {
        let a = [0.3, -1.2, 2.0, 0.7, 1.1, -0.4];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let x = FeatureMap::from_channels(2, 3, &[&a, &b]).unwrap();
        let s = standardized_covariance(&x);
        assert!((s.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
    }
}
