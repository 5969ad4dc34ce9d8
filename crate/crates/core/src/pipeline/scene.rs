//! Synthetic segmentation scenes: textured shapes on a textured background,
//! rendered in a per-class color and then restyled photometrically.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{hsv_to_rgb, RgbImage};
use crate::sensitivity::{apply_draw, JitterDraw, Range};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneStyle {
    /// Radians.
    pub hue_rotation: f64,
    pub brightness_scale: f64,
    pub blur_sigma: f64,
}

impl SceneStyle {
    fn as_draw(&self) -> JitterDraw {
        JitterDraw {
            brightness: self.brightness_scale,
            contrast: 1.0,
            saturation: 1.0,
            hue_shift: self.hue_rotation,
            blur_sigma: self.blur_sigma,
        }
    }
}

/// Style parameter ranges a domain draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleDomain {
    pub hue_rotation: Range,
    pub brightness_scale: Range,
    pub blur_sigma: Range,
}

impl StyleDomain {
    pub fn source() -> Self {
        Self {
            hue_rotation: Range::new(-0.25, 0.25),
            brightness_scale: Range::new(0.9, 1.1),
            blur_sigma: Range::new(0.0, 0.3),
        }
    }

    /// Rotates class colors partway toward the neighbouring class, darker
    /// and blurrier.
    pub fn target() -> Self {
        Self {
            hue_rotation: Range::new(0.6, 1.0),
            brightness_scale: Range::new(0.6, 0.75),
            blur_sigma: Range::new(0.6, 0.9),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hue_rotation.validate("hue_rotation")?;
        self.brightness_scale.validate("brightness_scale")?;
        self.blur_sigma.validate("blur_sigma")?;
        if self.brightness_scale.lo <= 0.0 {
            return Err(Error::Config("brightness_scale must be positive".into()));
        }
        if self.blur_sigma.lo < 0.0 {
            return Err(Error::Config("blur_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// True when no style can be drawn from both domains.
    pub fn disjoint_from(&self, other: &StyleDomain) -> bool {
        let apart = |a: &Range, b: &Range| a.hi < b.lo || b.hi < a.lo;
        apart(&self.hue_rotation, &other.hue_rotation)
            || apart(&self.brightness_scale, &other.brightness_scale)
            || apart(&self.blur_sigma, &other.blur_sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Including the background class 0.
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_classes: 5,
            min_shapes: 2,
            max_shapes: 5,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config("scenes must be at least 8x8".into()));
        }
        if !(2..=5).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "num_classes must be in 2..=5, got {}",
                self.num_classes
            )));
        }
        if self.min_shapes == 0 || self.min_shapes > self.max_shapes {
            return Err(Error::Config("need 1 <= min_shapes <= max_shapes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: RgbImage,
    /// Row-major class index per pixel.
    pub labels: Vec<usize>,
    pub style: SceneStyle,
    pub content_seed: u64,
}

/// Base hue (turns) of each foreground class.
const CLASS_HUES: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

fn texture(class: usize, y: f64, x: f64, phase: f64) -> f64 {
    match class {
        1 => ((y + phase) / 2.0).floor().rem_euclid(2.0),
        2 => ((x + phase) / 2.0).floor().rem_euclid(2.0),
        3 => (((y + phase) / 3.0).floor() + ((x + phase) / 3.0).floor()).rem_euclid(2.0),
        _ => {
            let dy = (y + phase).rem_euclid(4.0) - 1.5;
            let dx = (x + phase).rem_euclid(4.0) - 1.5;
            if dy * dy + dx * dx < 1.6 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Label map and unstyled image for one content seed.
pub fn render_content(cfg: &SceneConfig, content_seed: u64) -> (RgbImage, Vec<usize>) {
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(content_seed);
    let mut labels = vec![0usize; h * w];
    let mut pixels = vec![[0.0; 3]; h * w];

    let bg_hue = uniform(&mut rng);
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = uniform(&mut rng) * std::f64::consts::TAU;
            let freq = 0.05 + 0.1 * uniform(&mut rng);
            (
                angle.cos() * freq,
                angle.sin() * freq,
                uniform(&mut rng) * std::f64::consts::TAU,
            )
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let n: f64 = waves
                .iter()
                .map(|(fy, fx, ph)| (fy * y as f64 + fx * x as f64 + ph).sin())
                .sum::<f64>()
                / 3.0;
            pixels[y * w + x] = hsv_to_rgb([bg_hue, 0.15, 0.45 + 0.2 * n]);
        }
    }

    let shapes = rng.random_range(cfg.min_shapes..=cfg.max_shapes);
    let min_dim = h.min(w) as f64;
    for _ in 0..shapes {
        let class = rng.random_range(1..cfg.num_classes);
        let cy = uniform(&mut rng) * h as f64;
        let cx = uniform(&mut rng) * w as f64;
        let ry = min_dim * (0.08 + 0.14 * uniform(&mut rng));
        let rx = min_dim * (0.08 + 0.14 * uniform(&mut rng));
        let ellipse = rng.random_bool(0.5);
        let phase = uniform(&mut rng) * 4.0;
        let sat = 0.65 + 0.2 * uniform(&mut rng);
        let hue = CLASS_HUES[class - 1] + 0.03 * (uniform(&mut rng) - 0.5);
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 + 0.5 - cy) / ry;
                let dx = (x as f64 + 0.5 - cx) / rx;
                let inside = if ellipse {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    let t = texture(class, y as f64, x as f64, phase);
                    labels[y * w + x] = class;
                    pixels[y * w + x] = hsv_to_rgb([hue, sat, 0.3 + 0.6 * t]);
                }
            }
        }
    }
    let data = (0..3)
        .flat_map(|c| pixels.iter().map(move |p| p[c]))
        .collect();
    (
        RgbImage::new(h, w, data).expect("rendered pixels lie in [0, 1]"),
        labels,
    )
}

/// Style for `content_seed` inside `domain`; domains map the same underlying
/// uniforms through their own ranges.
pub fn draw_style(domain: &StyleDomain, content_seed: u64) -> SceneStyle {
    let mut rng = ChaCha8Rng::seed_from_u64(content_seed ^ 0x5354_594c_4500_0000);
    SceneStyle {
        hue_rotation: domain.hue_rotation.sample(uniform(&mut rng)),
        brightness_scale: domain.brightness_scale.sample(uniform(&mut rng)),
        blur_sigma: domain.blur_sigma.sample(uniform(&mut rng)),
    }
}

pub fn render_scene(cfg: &SceneConfig, content_seed: u64, style: SceneStyle) -> SyntheticScene {
    let (base, labels) = render_content(cfg, content_seed);
    SyntheticScene {
        image: apply_draw(&base, &style.as_draw()),
        labels,
        style,
        content_seed,
    }
}

/// Content seed of scene `index` in a dataset generated from `seed`.
pub fn content_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index as u64)
}

pub fn generate_dataset(
    num_scenes: usize,
    domain: &StyleDomain,
    cfg: &SceneConfig,
    seed: u64,
) -> Result<Vec<SyntheticScene>> {
    domain.validate()?;
    cfg.validate()?;
    Ok((0..num_scenes)
        .map(|i| {
            let cs = content_seed(seed, i);
            render_scene(cfg, cs, draw_style(domain, cs))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SceneConfig::default();
        let a = generate_dataset(4, &StyleDomain::source(), &cfg, 7).unwrap();
        let b = generate_dataset(4, &StyleDomain::source(), &cfg, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_do_not_depend_on_style() {
        let cfg = SceneConfig::default();
        let s = generate_dataset(6, &StyleDomain::source(), &cfg, 3).unwrap();
        let t = generate_dataset(6, &StyleDomain::target(), &cfg, 3).unwrap();
        for (a, b) in s.iter().zip(&t) {
            assert_eq!(a.labels, b.labels);
            assert_ne!(a.image, b.image);
            assert!(a.labels.iter().all(|&l| l < cfg.num_classes));
        }
    }

    #[test]
    fn default_domains_are_disjoint() {
        assert!(StyleDomain::source().disjoint_from(&StyleDomain::target()));
        assert!(!StyleDomain::source().disjoint_from(&StyleDomain::source()));
    }

    #[test]
    fn class_frequencies_stay_in_band() {
        let cfg = SceneConfig::default();
        let mut counts = [0usize; 5];
        for i in 0..1000 {
            let (_, labels) = render_content(&cfg, content_seed(11, i));
            for l in labels {
                counts[l] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let frac: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        assert!((0.45..0.8).contains(&frac[0]), "background {frac:?}");
        for f in &frac[1..] {
            assert!((0.04..0.15).contains(f), "{frac:?}");
        }
    }
}
