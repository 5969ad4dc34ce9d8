//! Central finite-difference checks of every analytic gradient in the crate.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{covariance_of_standardized, standardize, FeatureMap};
use crate::losses::{
    dwt_loss, full_mask, irw_loss, isw_loss, iw_loss, LossConfig, LossResult, LossVariant,
    Normalization, SelectionMask, DEFAULT_MARGIN,
};
use crate::pipeline::{cross_entropy, instance_objective, NetConfig, Network, NUM_BLOCKS};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const LOSS_TOLERANCE: f64 = 1e-6;
pub const END_TO_END_TOLERANCE: f64 = 1e-5;

/// Entries closer than this to a kink (`|Σ_ij| = 0`, hinge, ReLU) are not
/// finite-differenced.
const KINK_GUARD: f64 = 1e-4;

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Channel counts cycled through by the loss checks.
    pub channels: Vec<usize>,
    pub instances: usize,
    pub step: f64,
    /// Also check the end-to-end network objective.
    pub network: bool,
    /// Test hook: perturbs every analytic gradient so the suite must fail.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            channels: vec![2, 3, 4, 8, 16],
            instances: 50,
            step: DEFAULT_STEP,
            network: true,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport {
    pub name: String,
    pub instances: usize,
    /// Instances rejected for sitting too close to a kink.
    pub skipped: usize,
    pub worst_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub variants: Vec<VariantReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.variants.iter().all(|v| v.passed)
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Channels are random mixtures of shared sources, so covariances are well
/// away from zero.
pub fn random_feature_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let n = h * w;
    let sources: Vec<f64> = (0..c * n).map(|_| 2.0 * uniform(rng) - 1.0).collect();
    let mut data = vec![0.0; c * n];
    for i in 0..c {
        let offset = 3.0 * uniform(rng) - 1.5;
        for k in 0..c {
            let a = 2.0 * uniform(rng) - 1.0;
            for p in 0..n {
                data[i * n + p] += a * sources[k * n + p];
            }
        }
        for p in 0..n {
            data[i * n + p] += offset;
        }
    }
    FeatureMap::new(c, h, w, data).expect("finite by construction")
}

pub fn random_mask(rng: &mut ChaCha8Rng, c: usize, p: f64) -> SelectionMask {
    let pairs: Vec<(usize, usize)> = (0..c)
        .flat_map(|i| ((i + 1)..c).map(move |j| (i, j)))
        .filter(|_| uniform(rng) < p)
        .collect();
    SelectionMask::from_pairs(c, &pairs).expect("valid pairs")
}

fn near_abs_kink(xs: &FeatureMap, mask: &SelectionMask) -> bool {
    let s = covariance_of_standardized(xs);
    mask.pairs().any(|(i, j)| s.get(i, j).abs() < KINK_GUARD)
}

fn check_map_loss(
    f: &dyn Fn(&FeatureMap) -> Result<LossResult>,
    x: &FeatureMap,
    step: f64,
    corrupt: bool,
) -> Result<f64> {
    let analytic = f(x)?;
    let (c, h, w) = x.dims();
    let numeric = central_difference(
        |v| Ok(f(&FeatureMap::new(c, h, w, v.to_vec())?)?.value),
        x.as_slice(),
        step,
    )?;
    let mut g = analytic.gradient.into_vec();
    if corrupt {
        corrupt_gradient(&mut g);
    }
    Ok(relative_error(&g, &numeric))
}

fn corrupt_gradient(g: &mut [f64]) {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bump = if norm > 0.0 { 1e-2 * norm } else { 1e-2 };
    g[0] += bump;
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    instances: usize,
    skipped: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            instances: 0,
            skipped: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, err: f64) {
        self.instances += 1;
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
    }

    fn finish(self) -> VariantReport {
        VariantReport {
            name: self.name.into(),
            instances: self.instances,
            skipped: self.skipped,
            worst_rel_error: self.worst,
            tolerance: self.tolerance,
            passed: self.worst <= self.tolerance,
        }
    }
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.channels.is_empty() || opts.channels.contains(&0) {
        return Err(Error::InvalidInput(
            "channel sizes must be non-empty and positive".into(),
        ));
    }
    if opts.instances == 0 {
        return Err(Error::InvalidInput("need at least one instance".into()));
    }
    if !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {}",
            opts.step
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut dwt = Tally::new("dwt", LOSS_TOLERANCE);
    let mut iw = Tally::new("iw", LOSS_TOLERANCE);
    let mut irw = Tally::new("irw", LOSS_TOLERANCE);
    let mut isw = Tally::new("isw", LOSS_TOLERANCE);
    let mut xent = Tally::new("cross_entropy", LOSS_TOLERANCE);
    let attempts = 20 * opts.instances;

    for k in 0..attempts {
        if [&dwt, &iw, &irw, &isw]
            .iter()
            .all(|t| t.instances >= opts.instances)
        {
            break;
        }
        let c = opts.channels[k % opts.channels.len()];
        let h = 4;
        let w = (4 * c).div_ceil(h).max(4);
        let x = random_feature_map(&mut rng, c, h, w);
        let xs = standardize(&x);
        let full = full_mask(c);
        let sel = random_mask(&mut rng, c, 0.5);

        if dwt.instances < opts.instances {
            let err = check_map_loss(&dwt_loss, &x, opts.step, opts.corrupt)?;
            dwt.record(err);
        }
        if near_abs_kink(&xs, &full) {
            iw.skipped += 1;
            irw.skipped += 1;
            isw.skipped += 1;
            continue;
        }
        if iw.instances < opts.instances {
            let err = check_map_loss(&|v| iw_loss(v, &full), &x, opts.step, opts.corrupt)?;
            iw.record(err);
        }
        if irw.instances < opts.instances {
            let inner = iw_loss(&x, &full)?.value;
            let delta = if uniform(&mut rng) < 0.5 {
                DEFAULT_MARGIN
            } else {
                inner * (0.2 + 0.6 * uniform(&mut rng))
            };
            if (inner - delta).abs() < KINK_GUARD {
                irw.skipped += 1;
            } else {
                let err =
                    check_map_loss(&|v| irw_loss(v, &full, delta), &x, opts.step, opts.corrupt)?;
                irw.record(err);
            }
        }
        if isw.instances < opts.instances {
            let err = check_map_loss(&|v| isw_loss(v, &sel), &x, opts.step, opts.corrupt)?;
            isw.record(err);
        }
    }

    for _ in 0..opts.instances {
        let k = rng.random_range(2..=6);
        let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let logits = random_feature_map(&mut rng, k, h, w);
        let labels: Vec<usize> = (0..h * w).map(|_| rng.random_range(0..k)).collect();
        let err = check_map_loss(
            &|v| cross_entropy(v, &labels),
            &logits,
            opts.step,
            opts.corrupt,
        )?;
        xent.record(err);
    }

    let mut variants = vec![
        dwt.finish(),
        iw.finish(),
        irw.finish(),
        isw.finish(),
        xent.finish(),
    ];
    if opts.network {
        variants.push(check_network(&mut rng, opts)?);
    }
    Ok(GradcheckReport { variants })
}

/// Small network used by the end-to-end check: 3×8×8 input, widths ≤ 16.
pub fn gradcheck_net_config() -> NetConfig {
    NetConfig {
        widths: [4, 8, 8],
        strides: [1, 2, 1],
        num_classes: 4,
        aux_head: true,
    }
}

fn relu_pattern(net: &Network, image: &FeatureMap) -> Result<Vec<bool>> {
    let pass = net.forward(image)?;
    Ok((0..NUM_BLOCKS)
        .flat_map(|l| {
            pass.standardized(l)
                .as_slice()
                .iter()
                .map(|&v| v > 0.0)
                .collect::<Vec<_>>()
        })
        .collect())
}

/// True when some ReLU input or selected covariance entry is within the kink
/// guard, in which case the finite difference is not trustworthy.
fn network_near_kink(net: &Network, image: &FeatureMap, masks: &[SelectionMask]) -> Result<bool> {
    let pass = net.forward(image)?;
    for (l, m) in masks.iter().enumerate() {
        let xs = pass.standardized(l);
        if xs.as_slice().iter().any(|v| v.abs() < KINK_GUARD) || near_abs_kink(xs, m) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn check_network(rng: &mut ChaCha8Rng, opts: &GradcheckOptions) -> Result<VariantReport> {
    let mut tally = Tally::new("end_to_end", END_TO_END_TOLERANCE);
    let cfg = gradcheck_net_config();
    let loss_cfg = LossConfig {
        variant: LossVariant::Isw,
        normalization: Normalization::MaskCount,
        ..LossConfig::default()
    };
    let attempts = 20 * opts.instances;
    for _ in 0..attempts {
        if tally.instances >= opts.instances {
            break;
        }
        let net = Network::new(cfg.clone(), rng.next_u64())?;
        let image = FeatureMap::new(3, 8, 8, (0..192).map(|_| uniform(rng)).collect())?;
        let labels: Vec<usize> = (0..64)
            .map(|_| rng.random_range(0..cfg.num_classes))
            .collect();
        let masks: Vec<SelectionMask> = cfg
            .widths
            .iter()
            .map(|&c| random_mask(rng, c, 0.5))
            .collect();
        if network_near_kink(&net, &image, &masks)? {
            tally.skipped += 1;
            continue;
        }
        let base_pattern = relu_pattern(&net, &image)?;
        let mut grads = vec![0.0; net.num_params()];
        instance_objective(
            &net,
            &image,
            &labels,
            Some(&masks),
            &loss_cfg,
            true,
            1.0,
            &mut grads,
        )?;
        let mut probe = net.clone();
        let mut crossed = false;
        let numeric = central_difference(
            |p| {
                probe.params_mut().copy_from_slice(p);
                if relu_pattern(&probe, &image)? != base_pattern {
                    crossed = true;
                }
                let mut scratch = vec![0.0; p.len()];
                Ok(instance_objective(
                    &probe,
                    &image,
                    &labels,
                    Some(&masks),
                    &loss_cfg,
                    true,
                    1.0,
                    &mut scratch,
                )?
                .total)
            },
            net.params(),
            opts.step,
        )?;
        if crossed {
            tally.skipped += 1;
            continue;
        }
        if opts.corrupt {
            corrupt_gradient(&mut grads);
        }
        tally.record(relative_error(&grads, &numeric));
    }
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn central_difference_of_quadratic_is_exact() {
        let g = central_difference(|v| Ok(v[0] * v[0] + 3.0 * v[1]), &[2.0, -1.0], 1e-3).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-10 && (g[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn small_suite_passes_and_corruption_fails() {
        let opts = GradcheckOptions {
            instances: 3,
            channels: vec![3, 5],
            ..GradcheckOptions::default()
        };
        let report = run_gradcheck(&opts).unwrap();
        assert!(report.passed(), "{report:?}");
        let bad = run_gradcheck(&GradcheckOptions {
            corrupt: true,
            ..opts
        })
        .unwrap();
        assert!(bad.variants.iter().all(|v| !v.passed), "{bad:?}");
    }

    #[test]
    fn single_channel_is_trivial() {
        let opts = GradcheckOptions {
            instances: 2,
            channels: vec![1],
            network: false,
            ..GradcheckOptions::default()
        };
        let report = run_gradcheck(&opts).unwrap();
        assert!(report.passed());
        let iw = report.variants.iter().find(|v| v.name == "iw").unwrap();
        assert_eq!(iw.worst_rel_error, 0.0);
    }
}
