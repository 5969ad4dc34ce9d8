//! Globally optimal 1-D k-means.
//!
//! In one dimension an optimal clustering is a partition of the sorted values
//! into contiguous runs, so the optimum is found exactly by dynamic
//! programming over split points. Equal values are grouped before the DP and
//! therefore always land in the same cluster.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans1d {
    /// Cluster of each input value, in input order. Cluster 0 has the
    /// smallest centroid.
    pub labels: Vec<usize>,
    /// Ascending.
    pub centroids: Vec<f64>,
    /// Number of clusters actually formed; below the requested `k` when
    /// there are fewer distinct values.
    pub effective_k: usize,
}

impl KMeans1d {
    /// Within-cluster sum of squared deviations of `values` under `labels`.
    pub fn objective(&self, values: &[f64]) -> f64 {
        within_cluster_sse(values, &self.labels, self.effective_k)
    }
}

/// Two-pass SSE of a labelling; shared by callers and tests as the common
/// yardstick for comparing partitions.
pub fn within_cluster_sse(values: &[f64], labels: &[usize], k: usize) -> f64 {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&v, &l) in values.iter().zip(labels) {
        sums[l] += v;
        counts[l] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    values
        .iter()
        .zip(labels)
        .map(|(&v, &l)| (v - means[l]) * (v - means[l]))
        .sum()
}

/// Weighted SSE of every contiguous segment `[i, j]` of the distinct values.
fn segment_costs(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut cost = vec![0.0; n * n];
    for j in 0..n {
        let (mut w_total, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for i in (0..=j).rev() {
            let (x, w) = (values[i], weights[i]);
            let new_w = w_total + w;
            let delta = x - mean;
            mean += delta * w / new_w;
            m2 += delta * (x - mean) * w;
            w_total = new_w;
            cost[i * n + j] = m2;
        }
    }
    cost
}

pub fn kmeans_1d(values: &[f64], k: usize) -> Result<KMeans1d> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "k-means needs at least one value".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k-means needs k >= 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut distinct: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut group_of = vec![0usize; values.len()];
    for &idx in &order {
        let v = values[idx];
        if distinct.last() != Some(&v) {
            distinct.push(v);
            weights.push(0.0);
        }
        *weights.last_mut().unwrap() += 1.0;
        group_of[idx] = distinct.len() - 1;
    }

    let n = distinct.len();
    let ek = k.min(n);
    // cluster_start[c] = first distinct index of cluster c
    let cluster_start: Vec<usize> = if ek == n {
        (0..n).collect()
    } else {
        let cost = segment_costs(&distinct, &weights);
        let inf = f64::INFINITY;
        // best[m][j]: optimal cost of the first j+1 values in m+1 clusters
        let mut best = vec![vec![inf; n]; ek];
        let mut split = vec![vec![0usize; n]; ek];
        best[0].copy_from_slice(&cost[..n]);
        for m in 1..ek {
            for j in m..n {
                for i in m..=j {
                    let c = best[m - 1][i - 1] + cost[i * n + j];
                    // `<=` keeps the latest split among ties so boundary
                    // values stay in the lower cluster.
                    if c <= best[m][j] {
                        best[m][j] = c;
                        split[m][j] = i;
                    }
                }
            }
        }
        let mut starts = vec![0usize; ek];
        let mut j = n - 1;
        for m in (1..ek).rev() {
            let i = split[m][j];
            starts[m] = i;
            j = i - 1;
        }
        starts
    };

    let mut cluster_of_distinct = vec![0usize; n];
    for (c, &start) in cluster_start.iter().enumerate() {
        let end = cluster_start.get(c + 1).copied().unwrap_or(n);
        cluster_of_distinct[start..end].fill(c);
    }
    let mut sums = vec![0.0; ek];
    let mut counts = vec![0.0; ek];
    for (d, &c) in cluster_of_distinct.iter().enumerate() {
        sums[c] += distinct[d] * weights[d];
        counts[c] += weights[d];
    }
    Ok(KMeans1d {
        labels: group_of.iter().map(|&g| cluster_of_distinct[g]).collect(),
        centroids: sums.iter().zip(&counts).map(|(s, c)| s / c).collect(),
        effective_k: ek,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_groups() {
        let r = kmeans_1d(&[0.0, 10.0, 0.0, 10.0], 2).unwrap();
        assert_eq!(r.labels, vec![0, 1, 0, 1]);
        assert_eq!(r.centroids, vec![0.0, 10.0]);
    }

    #[test]
    fn all_equal_degrades_to_one_cluster() {
        let r = kmeans_1d(&[2.5; 6], 3).unwrap();
        assert_eq!(r.effective_k, 1);
        assert!(r.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn three_groups() {
        let v = [100.0, 1.0, 11.0, 2.0, 3.0, 12.0, 10.0];
        let r = kmeans_1d(&v, 3).unwrap();
        assert_eq!(r.labels, vec![2, 0, 1, 0, 0, 1, 1]);
        assert_eq!(r.centroids, vec![2.0, 11.0, 100.0]);
    }

    #[test]
    fn duplicates_never_split() {
        let v = [1.0, 1.0, 1.0, 2.0, 2.0, 9.0];
        let r = kmeans_1d(&v, 4).unwrap();
        assert_eq!(r.effective_k, 3);
        assert_eq!(r.labels, vec![0, 0, 0, 1, 1, 2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans_1d(&[], 2).is_err());
        assert!(kmeans_1d(&[1.0], 0).is_err());
        assert!(kmeans_1d(&[f64::NAN], 1).is_err());
    }
}
