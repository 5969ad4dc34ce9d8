use crate::error::{Error, Result};
use crate::linalg::CovarianceMatrix;

/// Running variance matrix `V`: per-entry variance of the standardized
/// covariance between an image and its photometric transform, averaged over
/// the accumulated pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityStats {
    dim: usize,
    sum: Vec<f64>,
    count: usize,
}

impl SensitivityStats {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sum: vec![0.0; dim * dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_count(&self) -> usize {
        self.count
    }

    /// Adds one pair's entrywise variance `¼(Σ(x) - Σ(τx))²`.
    pub fn accumulate_pair(
        &mut self,
        sigma_orig: &CovarianceMatrix,
        sigma_aug: &CovarianceMatrix,
    ) -> Result<()> {
        if sigma_orig.dim() != self.dim || sigma_aug.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "stats for C={} given covariances of dims {} and {}",
                self.dim,
                sigma_orig.dim(),
                sigma_aug.dim()
            )));
        }
        for ((s, a), b) in self
            .sum
            .iter_mut()
            .zip(sigma_orig.as_slice())
            .zip(sigma_aug.as_slice())
        {
            let d = a - b;
            *s += 0.25 * d * d;
        }
        self.count += 1;
        Ok(())
    }

    /// Combines two partial accumulations as if their pairs had been
    /// accumulated into one object.
    pub fn merge(&mut self, other: &SensitivityStats) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge stats of dims {} and {}",
                self.dim, other.dim
            )));
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    /// `V = (1/N) Σ σ_i²`; the zero matrix before any pair is accumulated.
    pub fn variance_matrix(&self) -> CovarianceMatrix {
        let n = self.count.max(1) as f64;
        let dim = self.dim;
        CovarianceMatrix::from_upper(dim, |i, j| self.sum[i * dim + j] / n)
    }

    /// Rebuilds stats from an exported `V` and its sample count.
    pub fn from_variance(v: &CovarianceMatrix, sample_count: usize) -> Result<Self> {
        if v.as_slice().iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput(
                "variance matrix has negative entries".into(),
            ));
        }
        let n = sample_count as f64;
        Ok(Self {
            dim: v.dim(),
            sum: v.as_slice().iter().map(|x| x * n).collect(),
            count: sample_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2(a: f64, off: f64, b: f64) -> CovarianceMatrix {
        CovarianceMatrix::from_rows(&[&[a, off], &[off, b]]).unwrap()
    }

    #[test]
    fn equal_pair_contributes_nothing() {
        let mut s = SensitivityStats::new(2);
        let m = sym2(1.0, 0.3, 1.0);
        s.accumulate_pair(&m, &m).unwrap();
        assert!(s.variance_matrix().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_entry_contribution() {
        let mut s = SensitivityStats::new(2);
        s.accumulate_pair(&sym2(1.0, 0.2, 1.0), &sym2(1.0, 0.6, 1.0))
            .unwrap();
        assert!((s.variance_matrix().get(0, 1) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn repeating_a_pair_leaves_v_unchanged() {
        let (a, b) = (sym2(1.0, -0.1, 1.0), sym2(1.0, 0.5, 1.0));
        let mut s = SensitivityStats::new(2);
        s.accumulate_pair(&a, &b).unwrap();
        let once = s.variance_matrix();
        s.accumulate_pair(&a, &b).unwrap();
        assert!(s.variance_matrix().frobenius_distance(&once) < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = SensitivityStats::new(3);
        let m = sym2(1.0, 0.0, 1.0);
        assert!(s.accumulate_pair(&m, &m).is_err());
    }
}
