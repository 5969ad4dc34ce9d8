use serde::{Deserialize, Serialize};

use super::{kmeans_1d, SensitivityStats};
use crate::error::{Error, Result};
use crate::losses::SelectionMask;

/// Offset added before taking `log10` of variance entries.
pub const LOG_OFFSET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    /// Number of clusters.
    pub k: usize,
    /// Clusters `0..m` (lowest centroids) are treated as insensitive.
    pub m: usize,
    /// Cluster `log10(V + 1e-12)` instead of raw `V`.
    pub log_scale: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 3,
            m: 1,
            log_scale: true,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "cluster count k must be >= 2, got {}",
                self.k
            )));
        }
        if self.m < 1 || self.m >= self.k {
            return Err(Error::Config(format!(
                "split index m must satisfy 1 <= m < k, got m={} k={}",
                self.m, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum MaskStatus {
    Ok,
    /// Too few distinct variance values to form more than `m` clusters; the
    /// mask is empty.
    Degenerate {
        effective_k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskDerivation {
    pub mask: SelectionMask,
    pub status: MaskStatus,
    /// Smallest raw `V` entry that was selected, if any.
    pub threshold: Option<f64>,
}

/// Selects the strict-upper entries of `V` whose k-means cluster is among the
/// `k - m` highest.
pub fn derive_mask(stats: &SensitivityStats, cfg: &ClusterConfig) -> Result<MaskDerivation> {
    cfg.validate()?;
    if stats.sample_count() == 0 {
        return Err(Error::InvalidInput(
            "sensitivity stats hold no samples".into(),
        ));
    }
    let dim = stats.dim();
    if dim < 2 {
        return Ok(MaskDerivation {
            mask: SelectionMask::empty(dim),
            status: MaskStatus::Degenerate { effective_k: 0 },
            threshold: None,
        });
    }
    let v = stats.variance_matrix();
    let raw = v.strict_upper();
    let keyed: Vec<f64> = if cfg.log_scale {
        raw.iter().map(|&x| (x + LOG_OFFSET).log10()).collect()
    } else {
        raw.clone()
    };
    let clusters = kmeans_1d(&keyed, cfg.k)?;
    if clusters.effective_k <= cfg.m {
        return Ok(MaskDerivation {
            mask: SelectionMask::empty(dim),
            status: MaskStatus::Degenerate {
                effective_k: clusters.effective_k,
            },
            threshold: None,
        });
    }
    let mut pairs = Vec::new();
    let mut threshold: Option<f64> = None;
    let mut idx = 0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            if clusters.labels[idx] >= cfg.m {
                pairs.push((i, j));
                threshold = Some(threshold.map_or(raw[idx], |t: f64| t.min(raw[idx])));
            }
            idx += 1;
        }
    }
    Ok(MaskDerivation {
        mask: SelectionMask::from_pairs(dim, &pairs)?,
        status: MaskStatus::Ok,
        threshold,
    })
}
