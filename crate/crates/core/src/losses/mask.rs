use crate::error::{Error, Result};

/// `C×C` binary selection over covariance entries; only the strict upper
/// triangle (`i < j`) can ever be set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionMask {
    dim: usize,
    bits: Vec<bool>,
}

impl SelectionMask {
    pub fn empty(dim: usize) -> Self {
        assert!(dim >= 1, "mask dimension must be positive");
        Self {
            dim,
            bits: vec![false; dim * dim],
        }
    }

    /// All `C(C-1)/2` strict-upper entries set.
    pub fn full(dim: usize) -> Self {
        let mut m = Self::empty(dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                m.bits[i * dim + j] = true;
            }
        }
        m
    }

    pub fn from_bits(dim: usize, bits: Vec<bool>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "mask dimension must be positive".into(),
            ));
        }
        if bits.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{dim}x{dim} mask needs {} bits, got {}",
                dim * dim,
                bits.len()
            )));
        }
        for i in 0..dim {
            for j in 0..=i {
                if bits[i * dim + j] {
                    return Err(Error::InvalidInput(format!(
                        "mask bit ({i},{j}) lies outside the strict upper triangle"
                    )));
                }
            }
        }
        Ok(Self { dim, bits })
    }

    /// From a 0/1 matrix (as read back from a mask CSV).
    pub fn from_values(dim: usize, values: &[f64]) -> Result<Self> {
        let bits = values
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                v => Err(Error::InvalidInput(format!(
                    "mask entries must be 0 or 1, got {v}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(dim, bits)
    }

    pub fn from_pairs(dim: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::empty(dim);
        for &(i, j) in pairs {
            if !(i < j && j < dim) {
                return Err(Error::InvalidInput(format!(
                    "pair ({i},{j}) is not in the strict upper triangle of a {dim}x{dim} mask"
                )));
            }
            m.bits[i * dim + j] = true;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.dim + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Selected `(i, j)` pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.dim;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / n, k % n))
    }

    pub fn is_subset_of(&self, other: &SelectionMask) -> bool {
        self.dim == other.dim && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Strict-upper entries set here but not in `self`: `full - self`.
    pub fn complement(&self) -> SelectionMask {
        let mut out = Self::full(self.dim);
        for (o, &b) in out.bits.iter_mut().zip(&self.bits) {
            *o &= !b;
        }
        out
    }
}

pub fn full_mask(c: usize) -> SelectionMask {
    SelectionMask::full(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mask_counts() {
        assert_eq!(full_mask(1).count(), 0);
        let m3 = full_mask(3);
        assert_eq!(m3.pairs().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(full_mask(64).count(), 2016);
    }

    #[test]
    fn rejects_lower_triangle_and_diagonal() {
        let mut bits = vec![false; 4];
        bits[2] = true; // (1, 0)
        assert!(SelectionMask::from_bits(2, bits).is_err());
        assert!(SelectionMask::from_pairs(3, &[(1, 1)]).is_err());
        assert!(SelectionMask::from_values(2, &[0.0, 0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn complement_partitions_full() {
        let m = SelectionMask::from_pairs(4, &[(0, 1), (2, 3)]).unwrap();
        let c = m.complement();
        assert_eq!(m.count() + c.count(), 6);
        assert!(c.is_subset_of(&full_mask(4)));
        assert!(!c.get(0, 1));
    }
}
