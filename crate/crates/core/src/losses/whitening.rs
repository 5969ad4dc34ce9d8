//! Covariance-based whitening losses and their gradients with respect to the
//! raw feature map.

use serde::{Deserialize, Serialize};

use super::SelectionMask;
use crate::error::{Error, Result};
use crate::linalg::{
    compute_covariance, compute_mean, covariance_of_standardized, standardize_backward,
    standardize_with_cache, FeatureMap,
};

/// Default IRW margin.
pub const DEFAULT_MARGIN: f64 = 1.0 / 64.0;
/// Default weight of the averaged whitening term in the total objective.
pub const DEFAULT_LAMBDA: f64 = 0.6;
/// Default weight of the auxiliary task head.
pub const DEFAULT_AUX_WEIGHT: f64 = 0.4;
/// Number of instrumented layers.
pub const DEFAULT_NUM_LAYERS: usize = 3;

/// A scalar loss and its gradient with respect to the tensor it was computed on.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub gradient: FeatureMap,
}

impl LossResult {
    pub fn zero_like(x: &FeatureMap) -> Self {
        let (c, h, w) = x.dims();
        Self {
            value: 0.0,
            gradient: FeatureMap::zeros(c, h, w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    Dwt,
    Iw,
    Irw,
    Isw,
}

/// Denominator of the masked mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mean over the selected entries.
    #[default]
    MaskCount,
    /// Sum over the selected entries divided by `C²`.
    AllEntries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub margin_delta: f64,
    pub lambda_weight: f64,
    pub num_layers: usize,
    /// Weight of an auxiliary task loss, when one is supplied.
    pub aux_weight: f64,
    pub normalization: Normalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Isw,
            margin_delta: 0.0,
            lambda_weight: DEFAULT_LAMBDA,
            num_layers: DEFAULT_NUM_LAYERS,
            aux_weight: DEFAULT_AUX_WEIGHT,
            normalization: Normalization::MaskCount,
        }
    }
}

impl LossConfig {
    pub fn irw() -> Self {
        Self {
            variant: LossVariant::Irw,
            margin_delta: DEFAULT_MARGIN,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        };
        nonneg("margin_delta", self.margin_delta)?;
        nonneg("lambda_weight", self.lambda_weight)?;
        nonneg("aux_weight", self.aux_weight)?;
        if self.variant != LossVariant::Irw && self.margin_delta != 0.0 {
            return Err(Error::Config(format!(
                "margin_delta applies to the irw variant only (variant {:?}, margin {})",
                self.variant, self.margin_delta
            )));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be positive".into()));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(G + Gᵀ) A / n`, where `G` is the (upper-triangular or full) gradient
/// with respect to the second-moment matrix `A Aᵀ / n`.
fn second_moment_backward(a: &FeatureMap, g: &[f64]) -> FeatureMap {
    let (c, h, w) = a.dims();
    let n = a.spatial();
    let inv_n = 1.0 / n as f64;
    let mut out = vec![0.0; c * n];
    for i in 0..c {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..c {
            let coeff = (g[i * c + k] + g[k * c + i]) * inv_n;
            if coeff == 0.0 {
                continue;
            }
            for (o, v) in row.iter_mut().zip(a.channel(k)) {
                *o += coeff * v;
            }
        }
    }
    FeatureMap::from_raw(c, h, w, out)
}

/// Masked mean of `|Σ_s|` over an already standardized map, with the
/// gradient with respect to that map.
///
/// The hinge `max(inner - margin, 0)` is applied when `margin > 0`; at or
/// below the margin the gradient is exactly zero.
pub fn standardized_penalty(
    xs: &FeatureMap,
    mask: &SelectionMask,
    margin: f64,
    normalization: Normalization,
) -> Result<LossResult> {
    let c = xs.channels();
    if mask.dim() != c {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} mask for a {c}-channel feature map",
            mask.dim(),
            mask.dim()
        )));
    }
    let count = mask.count();
    if count == 0 {
        return Ok(LossResult::zero_like(xs));
    }
    let denom = match normalization {
        Normalization::MaskCount => count as f64,
        Normalization::AllEntries => (c * c) as f64,
    };
    let sigma = covariance_of_standardized(xs);
    let inner = mask
        .pairs()
        .map(|(i, j)| sigma.get(i, j).abs())
        .sum::<f64>()
        / denom;
    if margin > 0.0 && inner <= margin {
        return Ok(LossResult::zero_like(xs));
    }
    let mut g = vec![0.0; c * c];
    for (i, j) in mask.pairs() {
        g[i * c + j] = sign(sigma.get(i, j)) / denom;
    }
    Ok(LossResult {
        value: (inner - margin).max(0.0),
        gradient: second_moment_backward(xs, &g),
    })
}

/// Shared path of the IW/IRW/ISW losses on a raw map: standardize, penalize,
/// pull the gradient back through the standardization.
pub fn instance_whitening_loss(
    x: &FeatureMap,
    mask: &SelectionMask,
    margin: f64,
    normalization: Normalization,
) -> Result<LossResult> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "margin must be >= 0, got {margin}"
        )));
    }
    let cache = standardize_with_cache(x);
    let on_xs = standardized_penalty(&cache.output, mask, margin, normalization)?;
    if on_xs.value == 0.0 && on_xs.gradient.as_slice().iter().all(|&g| g == 0.0) {
        return Ok(LossResult::zero_like(x));
    }
    Ok(LossResult {
        value: on_xs.value,
        gradient: standardize_backward(&cache, &on_xs.gradient),
    })
}

/// Mean absolute deviation of the raw covariance from the identity, over all
/// `C²` entries.
pub fn dwt_loss(x: &FeatureMap) -> Result<LossResult> {
    let c = x.channels();
    let mu = compute_mean(x);
    let sigma = compute_covariance(x, &mu)?;
    let denom = (c * c) as f64;
    let mut value = 0.0;
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let d = sigma.get(i, j) - if i == j { 1.0 } else { 0.0 };
            value += d.abs();
            g[i * c + j] = sign(d) / denom;
        }
    }
    let (_, h, w) = x.dims();
    let m = mu.as_slice();
    let centered = FeatureMap::from_raw(
        c,
        h,
        w,
        (0..c)
            .flat_map(|ch| x.channel(ch).iter().map(move |v| v - m[ch]))
            .collect(),
    );
    let mut grad = second_moment_backward(&centered, &g);
    // Centering is a projection; its adjoint removes each channel's mean.
    for ch in 0..c {
        let row = grad.channel_mut(ch);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(LossResult {
        value: value / denom,
        gradient: grad,
    })
}

/// Instance whitening: mean `|Σ_s|` over the mask (normally the full strict
/// upper triangle).
pub fn iw_loss(x: &FeatureMap, m: &SelectionMask) -> Result<LossResult> {
    instance_whitening_loss(x, m, 0.0, Normalization::MaskCount)
}

/// Instance-relaxed whitening: `max(iw - delta, 0)`.
pub fn irw_loss(x: &FeatureMap, m: &SelectionMask, delta: f64) -> Result<LossResult> {
    instance_whitening_loss(x, m, delta, Normalization::MaskCount)
}

/// Instance selective whitening: the IW penalty restricted to the
/// style-sensitive entries in `m_tilde`.
pub fn isw_loss(x: &FeatureMap, m_tilde: &SelectionMask) -> Result<LossResult> {
    instance_whitening_loss(x, m_tilde, 0.0, Normalization::MaskCount)
}

/// Total objective with each term's gradient scaled by its weight.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub value: f64,
    pub task_gradient: FeatureMap,
    pub aux_gradient: Option<FeatureMap>,
    /// Per layer, already multiplied by `λ / L`.
    pub whitening_gradients: Vec<FeatureMap>,
}

/// `task + γ₁·aux + λ·(1/L)·Σ whitening`.
pub fn total_loss(
    task: &LossResult,
    aux: Option<&LossResult>,
    whitening: &[LossResult],
    config: &LossConfig,
) -> Result<TotalLoss> {
    config.validate()?;
    if whitening.len() != config.num_layers {
        return Err(Error::DimensionMismatch(format!(
            "expected {} whitening losses, got {}",
            config.num_layers,
            whitening.len()
        )));
    }
    let per_layer = config.lambda_weight / config.num_layers as f64;
    let wsum: f64 = whitening.iter().map(|l| l.value).sum();
    let mut value = task.value + per_layer * wsum;
    let aux_gradient = aux.map(|a| {
        value += config.aux_weight * a.value;
        let mut g = a.gradient.clone();
        g.scale(config.aux_weight);
        g
    });
    let whitening_gradients = whitening
        .iter()
        .map(|l| {
            let mut g = l.gradient.clone();
            g.scale(per_layer);
            g
        })
        .collect();
    Ok(TotalLoss {
        value,
        task_gradient: task.gradient.clone(),
        aux_gradient,
        whitening_gradients,
    })
}
