//! Gradient descent on a free feature map under the raw DWT loss versus the
//! standardized IW loss, measuring how far each decorrelates the channels.

use serde::{Deserialize, Serialize};

use super::{dwt_loss, full_mask, iw_loss, LossResult};
use crate::error::{Error, Result};
use crate::linalg::{standardized_covariance, FeatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub steps: usize,
    pub lr: f64,
    pub initial_offdiag: f64,
    /// Mean `|Σ_s(i,j)|`, `i < j`, after descending on the DWT loss.
    pub dwt_offdiag_residual: f64,
    /// Same measure after descending on the IW loss.
    pub iw_offdiag_residual: f64,
    pub dwt_final_loss: f64,
    pub iw_final_loss: f64,
}

fn descend(
    x: &FeatureMap,
    steps: usize,
    lr: f64,
    loss: impl Fn(&FeatureMap) -> Result<LossResult>,
    name: &str,
) -> Result<(FeatureMap, f64)> {
    let mut current = x.clone();
    let mut last = loss(&current)?;
    for step in 0..steps {
        current.add_scaled(-lr, &last.gradient);
        if !current.is_finite() {
            return Err(Error::Diverged {
                iteration: step,
                what: format!("{name} iterate became non-finite"),
            });
        }
        last = loss(&current)?;
        if !last.value.is_finite() {
            return Err(Error::Diverged {
                iteration: step,
                what: format!("{name} loss became non-finite"),
            });
        }
    }
    Ok((current, last.value))
}

/// Runs `steps` plain gradient steps of size `lr` from `x` under each loss.
pub fn conflict_probe(x: &FeatureMap, steps: usize, lr: f64) -> Result<ProbeReport> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let mask = full_mask(x.channels());
    let initial = standardized_covariance(x).mean_abs_off_diagonal();
    let (dwt_x, dwt_final) = descend(x, steps, lr, dwt_loss, "dwt")?;
    let (iw_x, iw_final) = descend(x, steps, lr, |v| iw_loss(v, &mask), "iw")?;
    Ok(ProbeReport {
        steps,
        lr,
        initial_offdiag: initial,
        dwt_offdiag_residual: standardized_covariance(&dwt_x).mean_abs_off_diagonal(),
        iw_offdiag_residual: standardized_covariance(&iw_x).mean_abs_off_diagonal(),
        dwt_final_loss: dwt_final,
        iw_final_loss: iw_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMap {
        let data = (0..3 * 16)
            .map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.3 + (k / 16) as f64 * ((k % 16) as f64).cos())
            .collect();
        FeatureMap::new(3, 4, 4, data).unwrap()
    }

    #[test]
    fn zero_steps_reports_initial_state() {
        let x = sample();
        let r = conflict_probe(&x, 0, 0.1).unwrap();
        assert_eq!(r.dwt_offdiag_residual, r.initial_offdiag);
        assert_eq!(r.iw_offdiag_residual, r.initial_offdiag);
    }

    #[test]
    fn deterministic() {
        let x = sample();
        assert_eq!(
            conflict_probe(&x, 20, 0.1).unwrap(),
            conflict_probe(&x, 20, 0.1).unwrap()
        );
    }

    #[test]
    fn rejects_nonpositive_lr() {
        let x = sample();
        assert!(conflict_probe(&x, 5, -1.0).is_err());
    }
}
