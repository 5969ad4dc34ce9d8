//! Color jitter followed by Gaussian blur, driven by a counter-seeded ChaCha
//! stream so every draw is reproducible.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{hsv_to_rgb, luma, rgb_to_hsv, RgbImage};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// `[max(0, 1 - s), 1 + s]`, the usual jitter-strength convention.
    pub fn around_one(strength: f64) -> Self {
        Self::new((1.0 - strength).max(0.0), 1.0 + strength)
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{name} range [{}, {}] is not well-ordered",
                self.lo, self.hi
            )))
        }
    }

    pub(crate) fn sample(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotometricTransform {
    pub brightness_range: Range,
    pub contrast_range: Range,
    pub saturation_range: Range,
    /// Hue rotation in radians.
    pub hue_shift_range: Range,
    pub blur_sigma_range: Range,
    pub rng_seed: u64,
}

impl Default for PhotometricTransform {
    /// Brightness, contrast and saturation strength 0.8, hue strength 0.3
    /// turns, blur sigma drawn from `[0.1, 2.0]`.
    fn default() -> Self {
        Self {
            brightness_range: Range::around_one(0.8),
            contrast_range: Range::around_one(0.8),
            saturation_range: Range::around_one(0.8),
            hue_shift_range: Range::new(-0.3 * 2.0 * PI, 0.3 * 2.0 * PI),
            blur_sigma_range: Range::new(0.1, 2.0),
            rng_seed: 0,
        }
    }
}

/// Factors drawn for one application of a [`PhotometricTransform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterDraw {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_shift: f64,
    pub blur_sigma: f64,
}

impl JitterDraw {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue_shift: 0.0,
            blur_sigma: 0.0,
        }
    }
}

impl PhotometricTransform {
    /// All factors pinned to the identity.
    pub fn identity() -> Self {
        Self {
            brightness_range: Range::point(1.0),
            contrast_range: Range::point(1.0),
            saturation_range: Range::point(1.0),
            hue_shift_range: Range::point(0.0),
            blur_sigma_range: Range::point(0.0),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.brightness_range.validate("brightness")?;
        self.contrast_range.validate("contrast")?;
        self.saturation_range.validate("saturation")?;
        self.hue_shift_range.validate("hue_shift")?;
        self.blur_sigma_range.validate("blur_sigma")?;
        if self.brightness_range.lo < 0.0
            || self.contrast_range.lo < 0.0
            || self.saturation_range.lo < 0.0
        {
            return Err(Error::Config("jitter factors must be >= 0".into()));
        }
        if self.blur_sigma_range.lo < 0.0 {
            return Err(Error::Config("blur sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Draws the factors for `(rng_seed, draw_seed)`, always in the order
    /// brightness, contrast, saturation, hue, blur.
    pub fn draw(&self, draw_seed: u64) -> JitterDraw {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.rng_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&draw_seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut u = || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        JitterDraw {
            brightness: self.brightness_range.sample(u()),
            contrast: self.contrast_range.sample(u()),
            saturation: self.saturation_range.sample(u()),
            hue_shift: self.hue_shift_range.sample(u()),
            blur_sigma: self.blur_sigma_range.sample(u()),
        }
    }
}

pub fn apply_transform(image: &RgbImage, t: &PhotometricTransform, draw_seed: u64) -> RgbImage {
    apply_draw(image, &t.draw(draw_seed))
}

/// Brightness, contrast, saturation and hue in that order, each clamped to
/// `[0, 1]`, then a separable Gaussian blur.
pub fn apply_draw(image: &RgbImage, d: &JitterDraw) -> RgbImage {
    let mut out = image.clone();
    let clamp = |v: f64| v.clamp(0.0, 1.0);

    if d.brightness != 1.0 {
        out.map_pixels(|p| p.map(|v| clamp(v * d.brightness)));
    }
    if d.contrast != 1.0 {
        let mean = (0..out.pixels()).map(|p| luma(out.pixel(p))).sum::<f64>() / out.pixels() as f64;
        out.map_pixels(|p| p.map(|v| clamp(d.contrast * v + (1.0 - d.contrast) * mean)));
    }
    if d.saturation != 1.0 {
        out.map_pixels(|p| {
            let gray = luma(p);
            p.map(|v| clamp(d.saturation * v + (1.0 - d.saturation) * gray))
        });
    }
    if d.hue_shift != 0.0 {
        let turns = d.hue_shift / (2.0 * PI);
        out.map_pixels(|p| {
            let [h, s, v] = rgb_to_hsv(p);
            hsv_to_rgb([h + turns, s, v]).map(clamp)
        });
    }
    if d.blur_sigma > 0.0 {
        out = gaussian_blur(&out, d.blur_sigma);
    }
    out
}

/// Kernel sampled at integer offsets `-r..=r`, `r = ⌈3σ⌉`, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

pub fn gaussian_blur(image: &RgbImage, sigma: f64) -> RgbImage {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (h, w) = (image.height(), image.width());
    let src = image.as_feature_map();
    let mut tmp = vec![0.0; 3 * h * w];
    for c in 0..3 {
        let plane = src.channel(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let xx = reflect(x as i64 + k as i64 - radius, w);
                    acc += wk * plane[y * w + xx];
                }
                tmp[(c * h + y) * w + x] = acc;
            }
        }
    }
    let mut out = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let yy = reflect(y as i64 + k as i64 - radius, h);
                    acc += wk * tmp[(c * h + yy) * w + x];
                }
                out[(c * h + y) * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    }
    RgbImage::new(h, w, out).expect("blur preserves shape and finiteness")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image() -> RgbImage {
        let (h, w) = (6, 5);
        let mut data = Vec::new();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data.push(((c + 1) * (y * w + x)) as f64 / (3 * h * w) as f64);
                }
            }
        }
        RgbImage::new(h, w, data).unwrap()
    }

    #[test]
    fn identity_transform_is_exact() {
        let img = gradient_image();
        let out = apply_transform(&img, &PhotometricTransform::identity(), 17);
        assert_eq!(out, img);
    }

    #[test]
    fn zero_brightness_is_black() {
        let t = PhotometricTransform {
            brightness_range: Range::point(0.0),
            ..PhotometricTransform::identity()
        };
        let out = apply_transform(&gradient_image(), &t, 0);
        assert!(out.as_feature_map().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn draws_are_reproducible_and_seed_dependent() {
        let t = PhotometricTransform::default();
        assert_eq!(t.draw(3), t.draw(3));
        assert_ne!(t.draw(3), t.draw(4));
        let other = PhotometricTransform {
            rng_seed: 1,
            ..t.clone()
        };
        assert_ne!(t.draw(3), other.draw(3));
        let d = t.draw(9);
        assert!(t.brightness_range.contains(d.brightness));
        assert!(t.hue_shift_range.contains(d.hue_shift));
    }

    #[test]
    fn default_output_stays_in_unit_range() {
        let img = gradient_image();
        let t = PhotometricTransform::default();
        for s in 0..20 {
            assert!(apply_transform(&img, &t, s).in_unit_range());
        }
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.2);
        assert_eq!(k.len(), 2 * 4 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..k.len() / 2 {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(9, 5), 1);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn rejects_inverted_ranges() {
        let t = PhotometricTransform {
            contrast_range: Range::new(1.2, 0.8),
            ..PhotometricTransform::default()
        };
        assert!(t.validate().is_err());
    }
}
