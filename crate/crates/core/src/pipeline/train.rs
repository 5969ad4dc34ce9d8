//! Two-phase training: task loss only for the first epochs, then a frozen
//! sensitivity pass fixes the per-layer masks, then task plus whitening loss.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{NetConfig, Network, NUM_BLOCKS};
use super::scene::SyntheticScene;
use super::xent::cross_entropy;
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::linalg::{covariance_of_standardized, FeatureMap};
use crate::losses::{
    full_mask, standardized_penalty, total_loss, LossConfig, LossResult, LossVariant,
    Normalization, SelectionMask, DEFAULT_AUX_WEIGHT, DEFAULT_LAMBDA, DEFAULT_MARGIN,
};
use crate::sensitivity::{
    run_sensitivity_pass, ClusterConfig, LayerSensitivity, PhotometricTransform,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainVariant {
    /// Instance standardization with no whitening loss.
    Baseline,
    Iw,
    Irw,
    Isw,
}

impl TrainVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Iw => "iw",
            Self::Irw => "irw",
            Self::Isw => "isw",
        }
    }
}

impl std::str::FromStr for TrainVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "iw" => Ok(Self::Iw),
            "irw" => Ok(Self::Irw),
            "isw" => Ok(Self::Isw),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub n_phase1_epochs: usize,
    pub total_iterations: usize,
    pub base_lr: f64,
    pub poly_power: f64,
    pub momentum: f64,
    pub lambda_weight: f64,
    pub loss_variant: TrainVariant,
    pub batch_size: usize,
    /// Hinge margin of the irw variant.
    pub margin_delta: f64,
    pub aux_weight: f64,
    pub normalization: Normalization,
    pub net: NetConfig,
    /// Seeds weight initialization and batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_phase1_epochs: 5,
            total_iterations: 4000,
            base_lr: 1e-2,
            poly_power: 0.9,
            momentum: 0.9,
            lambda_weight: DEFAULT_LAMBDA,
            loss_variant: TrainVariant::Isw,
            batch_size: 2,
            margin_delta: DEFAULT_MARGIN,
            aux_weight: DEFAULT_AUX_WEIGHT,
            normalization: Normalization::MaskCount,
            net: NetConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn phase1_iterations(&self, dataset_len: usize) -> usize {
        self.n_phase1_epochs * dataset_len.div_ceil(self.batch_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.n_phase1_epochs == 0 {
            return Err(Error::Config("n_phase1_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let finite_pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        finite_pos("base_lr", self.base_lr)?;
        finite_pos("poly_power", self.poly_power)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        self.loss_config().validate()
    }

    /// Loss settings for the whitening term. The baseline never evaluates it.
    pub fn loss_config(&self) -> LossConfig {
        let (variant, margin) = match self.loss_variant {
            TrainVariant::Baseline | TrainVariant::Isw => (LossVariant::Isw, 0.0),
            TrainVariant::Iw => (LossVariant::Iw, 0.0),
            TrainVariant::Irw => (LossVariant::Irw, self.margin_delta),
        };
        LossConfig {
            variant,
            margin_delta: margin,
            lambda_weight: self.lambda_weight,
            num_layers: NUM_BLOCKS,
            aux_weight: self.aux_weight,
            normalization: self.normalization,
        }
    }
}

/// `base_lr · (1 - t/T)^power`, zero from `t = T` on.
pub fn poly_lr(base_lr: f64, power: f64, t: usize, total: usize) -> f64 {
    if t >= total {
        return 0.0;
    }
    base_lr * (1.0 - t as f64 / total as f64).powf(power)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Phase1,
    Phase2,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: Network,
    pub velocity: Vec<f64>,
    pub iteration: usize,
    pub phase: Phase,
    /// One per instrumented layer, present exactly in phase 2.
    pub masks: Option<Vec<SelectionMask>>,
    pub config: TrainConfig,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let net = Network::new(config.net.clone(), config.seed)?;
        let velocity = vec![0.0; net.num_params()];
        Ok(Self {
            net,
            velocity,
            iteration: 0,
            phase: Phase::Phase1,
            masks: None,
            config,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub lr: f64,
    pub task_loss: f64,
    pub wloss: [f64; NUM_BLOCKS],
    pub phase: Phase,
}

pub fn write_log_csv<W: Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::format("training log", e.to_string());
    w.write_record([
        "iteration",
        "lr",
        "task_loss",
        "wloss_layer1",
        "wloss_layer2",
        "wloss_layer3",
        "phase",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            format!("{}", r.lr),
            format!("{}", r.task_loss),
            format!("{}", r.wloss[0]),
            format!("{}", r.wloss[1]),
            format!("{}", r.wloss[2]),
            r.phase.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::format("training log", e.to_string()))
}

/// Per-layer masked mean `|Σ_s|` averaged over a fixed image subset, at the
/// start and the end of phase 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionReport {
    pub phase2_start: Vec<f64>,
    pub phase2_end: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: TrainState,
    pub log: Vec<LogRow>,
    pub phase1_iterations: usize,
    /// Present for the isw variant.
    pub sensitivity: Option<Vec<LayerSensitivity>>,
    /// Present whenever phase 2 has non-empty masks.
    pub suppression: Option<SuppressionReport>,
}

/// Images used to measure masked covariance before and after phase 2.
pub const SUPPRESSION_PROBE: usize = 32;

/// Mean over images of the masked mean `|Σ_s|` at each layer.
pub fn masked_covariance_means(
    net: &Network,
    images: &[RgbImage],
    masks: &[SelectionMask],
) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::InvalidInput("need at least one image".into()));
    }
    let mut acc = vec![0.0; masks.len()];
    for img in images {
        let pass = net.forward(img.as_feature_map())?;
        for (l, m) in masks.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let s = covariance_of_standardized(pass.standardized(l));
            acc[l] += m.pairs().map(|(i, j)| s.get(i, j).abs()).sum::<f64>() / m.count() as f64;
        }
    }
    Ok(acc.into_iter().map(|a| a / images.len() as f64).collect())
}

/// Entrywise mean of `|Σ_s|` over `images`, one `C×C` row-major matrix per
/// layer.
pub fn mean_abs_covariances(net: &Network, images: &[RgbImage]) -> Result<Vec<Vec<f64>>> {
    if images.is_empty() {
        return Err(Error::InvalidInput("need at least one image".into()));
    }
    let mut acc: Vec<Vec<f64>> = net
        .config()
        .widths
        .iter()
        .map(|&c| vec![0.0; c * c])
        .collect();
    for img in images {
        let pass = net.forward(img.as_feature_map())?;
        for (l, a) in acc.iter_mut().enumerate() {
            let s = covariance_of_standardized(pass.standardized(l));
            a.iter_mut()
                .zip(s.as_slice())
                .for_each(|(a, v)| *a += v.abs());
        }
    }
    let inv = 1.0 / images.len() as f64;
    for a in &mut acc {
        a.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(acc)
}

/// Runs the full two-phase schedule on `data`.
pub fn train(
    config: &TrainConfig,
    data: &[SyntheticScene],
    transform: &PhotometricTransform,
    cluster: &ClusterConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if config.loss_variant == TrainVariant::Isw {
        transform.validate()?;
        cluster.validate()?;
    }
    let k = config.net.num_classes;
    if let Some(s) = data.iter().find(|s| s.labels.iter().any(|&l| l >= k)) {
        return Err(Error::InvalidInput(format!(
            "scene {} has labels outside the {k} network classes",
            s.content_seed
        )));
    }
    let n = data.len();
    let total = config.total_iterations;
    let phase1 = config.phase1_iterations(n);
    if phase1 >= total {
        return Err(Error::Config(format!(
            "total_iterations {total} must exceed the phase-1 length {phase1}"
        )));
    }
    let per_epoch = n.div_ceil(config.batch_size);
    let loss_cfg = config.loss_config();
    let probe: Vec<RgbImage> = data
        .iter()
        .take(SUPPRESSION_PROBE)
        .map(|s| s.image.clone())
        .collect();

    let mut state = TrainState::new(config.clone())?;
    let mut log = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..n).collect();
    let mut sensitivity = None;
    let mut suppression_start = None;
    let mut grads = vec![0.0; state.net.num_params()];

    for t in 0..total {
        if t == phase1 {
            let masks = phase2_masks(
                &state.net,
                config,
                data,
                transform,
                cluster,
                &mut sensitivity,
            )?;
            if masks.iter().any(|m| !m.is_empty()) {
                suppression_start = Some(masked_covariance_means(&state.net, &probe, &masks)?);
            }
            state.masks = Some(masks);
            state.phase = Phase::Phase2;
        }
        let epoch = t / per_epoch;
        let slot = t % per_epoch;
        if slot == 0 {
            order = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(
                config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            order.shuffle(&mut rng);
        }
        let batch = &order[slot * config.batch_size..((slot + 1) * config.batch_size).min(n)];
        let lr = poly_lr(config.base_lr, config.poly_power, t, total);

        grads.fill(0.0);
        let inv_b = 1.0 / batch.len() as f64;
        let mut task_sum = 0.0;
        let mut wsum = [0.0; NUM_BLOCKS];
        for &i in batch {
            let scene = &data[i];
            let masks = match (&state.masks, config.loss_variant) {
                (Some(m), v) if v != TrainVariant::Baseline => Some(m.as_slice()),
                _ => None,
            };
            let parts = instance_objective(
                &state.net,
                scene.image.as_feature_map(),
                &scene.labels,
                masks,
                &loss_cfg,
                state.phase == Phase::Phase2,
                inv_b,
                &mut grads,
            )?;
            if !parts.total.is_finite() {
                return Err(Error::Diverged {
                    iteration: t,
                    what: "training loss".into(),
                });
            }
            task_sum += parts.task;
            for (s, w) in wsum.iter_mut().zip(parts.whitening) {
                *s += w;
            }
        }

        let mu = config.momentum;
        for ((p, v), g) in state
            .net
            .params_mut()
            .iter_mut()
            .zip(state.velocity.iter_mut())
            .zip(&grads)
        {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
        if state.net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: t,
                what: "network parameters".into(),
            });
        }
        state.iteration = t + 1;
        log.push(LogRow {
            iteration: t,
            lr,
            task_loss: task_sum * inv_b,
            wloss: wsum.map(|w| w * inv_b),
            phase: state.phase,
        });
    }

    let suppression = match (suppression_start, &state.masks) {
        (Some(start), Some(masks)) => Some(SuppressionReport {
            phase2_start: start,
            phase2_end: masked_covariance_means(&state.net, &probe, masks)?,
        }),
        _ => None,
    };
    Ok(TrainOutput {
        state,
        log,
        phase1_iterations: phase1,
        sensitivity,
        suppression,
    })
}

/// Loss terms of one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceLoss {
    /// `task + γ₁·aux + λ/L·Σ whitening` (whitening counted only if applied).
    pub total: f64,
    pub task: f64,
    pub whitening: [f64; NUM_BLOCKS],
}

/// Evaluates the training objective on one image and adds `grad_scale` times
/// its parameter gradient to `grads`.
///
/// With `masks` the per-layer whitening penalties are computed and logged;
/// they enter the objective and gradient only when `apply_whitening` is set.
#[allow(clippy::too_many_arguments)]
pub fn instance_objective(
    net: &Network,
    image: &FeatureMap,
    labels: &[usize],
    masks: Option<&[SelectionMask]>,
    loss_cfg: &LossConfig,
    apply_whitening: bool,
    grad_scale: f64,
    grads: &mut [f64],
) -> Result<InstanceLoss> {
    let pass = net.forward(image)?;
    let task = cross_entropy(&pass.logits, labels)?;
    let aux = match &pass.aux_logits {
        Some(a) => Some(cross_entropy(a, labels)?),
        None => None,
    };
    let whitening: Vec<LossResult> = match masks {
        Some(masks) => {
            if masks.len() != NUM_BLOCKS {
                return Err(Error::DimensionMismatch(format!(
                    "expected {NUM_BLOCKS} masks, got {}",
                    masks.len()
                )));
            }
            (0..NUM_BLOCKS)
                .map(|l| {
                    standardized_penalty(
                        pass.standardized(l),
                        &masks[l],
                        loss_cfg.margin_delta,
                        loss_cfg.normalization,
                    )
                })
                .collect::<Result<_>>()?
        }
        None => (0..NUM_BLOCKS)
            .map(|l| LossResult::zero_like(pass.standardized(l)))
            .collect(),
    };
    let combined = total_loss(&task, aux.as_ref(), &whitening, loss_cfg)?;
    let wvalues = [whitening[0].value, whitening[1].value, whitening[2].value];
    let mut total = combined.value;
    let scaled = |mut g: FeatureMap| {
        g.scale(grad_scale);
        g
    };
    let extra: Vec<Option<FeatureMap>> = if apply_whitening {
        combined
            .whitening_gradients
            .into_iter()
            .map(|g| Some(scaled(g)))
            .collect()
    } else {
        let per_layer = loss_cfg.lambda_weight / NUM_BLOCKS as f64;
        total -= per_layer * wvalues.iter().sum::<f64>();
        vec![None; NUM_BLOCKS]
    };
    let gl = scaled(combined.task_gradient);
    let ga = combined.aux_gradient.map(scaled);
    net.backward(&pass, &gl, ga.as_ref(), &extra, grads);
    Ok(InstanceLoss {
        total,
        task: task.value,
        whitening: wvalues,
    })
}

fn phase2_masks(
    net: &Network,
    config: &TrainConfig,
    data: &[SyntheticScene],
    transform: &PhotometricTransform,
    cluster: &ClusterConfig,
    sensitivity: &mut Option<Vec<LayerSensitivity>>,
) -> Result<Vec<SelectionMask>> {
    let widths = config.net.widths;
    Ok(match config.loss_variant {
        TrainVariant::Baseline => widths.iter().map(|&c| SelectionMask::empty(c)).collect(),
        TrainVariant::Iw | TrainVariant::Irw => widths.iter().map(|&c| full_mask(c)).collect(),
        TrainVariant::Isw => {
            let images: Vec<RgbImage> = data.iter().map(|s| s.image.clone()).collect();
            let layers = run_sensitivity_pass(net, &images, transform, cluster)?;
            let masks = layers.iter().map(|l| l.derivation.mask.clone()).collect();
            *sensitivity = Some(layers);
            masks
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::scene::{generate_dataset, SceneConfig, StyleDomain};

    fn tiny_config(variant: TrainVariant) -> (TrainConfig, Vec<SyntheticScene>) {
        let scenes = SceneConfig {
            height: 16,
            width: 16,
            ..SceneConfig::default()
        };
        let data = generate_dataset(6, &StyleDomain::source(), &scenes, 1).unwrap();
        let cfg = TrainConfig {
            n_phase1_epochs: 1,
            total_iterations: 8,
            batch_size: 2,
            loss_variant: variant,
            net: NetConfig {
                widths: [4, 6, 6],
                ..NetConfig::default()
            },
            ..TrainConfig::default()
        };
        (cfg, data)
    }

    #[test]
    fn lr_schedule_endpoints_and_monotone() {
        assert_eq!(poly_lr(0.01, 0.9, 0, 100), 0.01);
        assert_eq!(poly_lr(0.01, 0.9, 100, 100), 0.0);
        let lrs: Vec<f64> = (0..=100).map(|t| poly_lr(0.01, 0.9, t, 100)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn phase_lengths_and_log_shape() {
        let (cfg, data) = tiny_config(TrainVariant::Iw);
        let out = train(
            &cfg,
            &data,
            &PhotometricTransform::default(),
            &ClusterConfig::default(),
        )
        .unwrap();
        assert_eq!(out.phase1_iterations, 3);
        assert_eq!(out.log.len(), 8);
        assert!(out.log[..3]
            .iter()
            .all(|r| r.phase == Phase::Phase1 && r.wloss == [0.0; 3]));
        assert!(out.log[3..]
            .iter()
            .all(|r| r.phase == Phase::Phase2 && r.wloss[0] > 0.0));
        assert_eq!(out.state.phase, Phase::Phase2);
        assert!(out.suppression.is_some());
    }

    #[test]
    fn training_is_deterministic() {
        let (cfg, data) = tiny_config(TrainVariant::Isw);
        let run = || {
            train(
                &cfg,
                &data,
                &PhotometricTransform::default(),
                &ClusterConfig::default(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.state, b.state);
        assert_eq!(a.log, b.log);
        assert!(a.sensitivity.is_some());
    }

    #[test]
    fn zero_lambda_matches_baseline_parameters() {
        let (mut cfg, data) = tiny_config(TrainVariant::Iw);
        cfg.lambda_weight = 0.0;
        let t = PhotometricTransform::default();
        let c = ClusterConfig::default();
        let iw = train(&cfg, &data, &t, &c).unwrap();
        cfg.loss_variant = TrainVariant::Baseline;
        let base = train(&cfg, &data, &t, &c).unwrap();
        assert_eq!(iw.state.net, base.state.net);
        assert!(iw.log[5].wloss[1] > 0.0);
    }

    #[test]
    fn rejects_schedule_without_phase2() {
        let (mut cfg, data) = tiny_config(TrainVariant::Baseline);
        cfg.total_iterations = 3;
        let err = train(
            &cfg,
            &data,
            &PhotometricTransform::default(),
            &ClusterConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn log_csv_has_expected_header() {
        let rows = vec![LogRow {
            iteration: 0,
            lr: 0.01,
            task_loss: 1.5,
            wloss: [0.0, 0.25, 0.125],
            phase: Phase::Phase1,
        }];
        let mut buf = Vec::new();
        write_log_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,lr,task_loss,wloss_layer1,wloss_layer2,wloss_layer3,phase\n0,0.01,1.5,0,0.25,0.125,phase1\n"
        );
    }
}
