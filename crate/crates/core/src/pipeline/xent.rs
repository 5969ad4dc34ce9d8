use crate::error::{Error, Result};
use crate::linalg::FeatureMap;
use crate::losses::LossResult;

/// Mean per-pixel cross-entropy of `logits` (classes × H × W) against
/// row-major `labels`, with its gradient with respect to the logits.
pub fn cross_entropy(logits: &FeatureMap, labels: &[usize]) -> Result<LossResult> {
    let (k, h, w) = logits.dims();
    let n = h * w;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a {h}x{w} logit map",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let x = logits.as_slice();
    let mut grad = vec![0.0; k * n];
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for p in 0..n {
        let max = (0..k)
            .map(|c| x[c * n + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..k).map(|c| (x[c * n + p] - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - x[labels[p] * n + p];
        for c in 0..k {
            grad[c * n + p] = (x[c * n + p] - log_z).exp() * inv_n;
        }
        grad[labels[p] * n + p] -= inv_n;
    }
    Ok(LossResult {
        value: total * inv_n,
        gradient: FeatureMap::from_raw(k, h, w, grad),
    })
}
