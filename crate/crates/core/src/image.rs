//! Planar RGB rasters with channel values in `[0, 1]`.

use crate::error::{Error, Result};
use crate::linalg::FeatureMap;

/// Planar `3×H×W` image. Wraps a three-channel [`FeatureMap`] so images feed
/// straight into the network and the statistics code.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage(FeatureMap);

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_feature_map(FeatureMap::new(3, height, width, data)?)
    }

    pub fn from_feature_map(fm: FeatureMap) -> Result<Self> {
        if fm.channels() != 3 {
            return Err(Error::InvalidInput(format!(
                "RGB image needs 3 channels, got {}",
                fm.channels()
            )));
        }
        Ok(Self(fm))
    }

    pub fn black(height: usize, width: usize) -> Self {
        Self(FeatureMap::zeros(3, height, width))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn pixels(&self) -> usize {
        self.0.spatial()
    }

    pub fn as_feature_map(&self) -> &FeatureMap {
        &self.0
    }

    pub fn into_feature_map(self) -> FeatureMap {
        self.0
    }

    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        [
            self.0.get(0, y, x),
            self.0.get(1, y, x),
            self.0.get(2, y, x),
        ]
    }

    pub fn set(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.0.set(c, y, x, v);
        }
    }

    /// Pixel at flat spatial index `p`.
    pub fn pixel(&self, p: usize) -> [f64; 3] {
        [
            self.0.channel(0)[p],
            self.0.channel(1)[p],
            self.0.channel(2)[p],
        ]
    }

    pub fn set_pixel(&mut self, p: usize, rgb: [f64; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.0.channel_mut(c)[p] = v;
        }
    }

    pub fn map_pixels(&mut self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) {
        for p in 0..self.pixels() {
            let v = f(self.pixel(p));
            self.set_pixel(p, v);
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.0.as_slice().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// ITU-R 601 luma, as used for grayscale conversion.
pub fn luma([r, g, b]: [f64; 3]) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Hexcone RGB to HSV; hue in turns `[0, 1)`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    [(h / 6.0).rem_euclid(1.0), s, max]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_primaries() {
        assert_eq!(rgb_to_hsv([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0]);
        let g = rgb_to_hsv([0.0, 1.0, 0.0]);
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rgb_to_hsv([0.5, 0.5, 0.5]), [0.0, 0.0, 0.5]);
    }

    #[test]
    fn hsv_round_trip() {
        for k in 0..200 {
            let rgb = [
                (k * 37 % 101) as f64 / 100.0,
                (k * 53 % 97) as f64 / 96.0,
                (k * 11 % 89) as f64 / 88.0,
            ];
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for c in 0..3 {
                assert!((back[c] - rgb[c]).abs() < 1e-12, "{rgb:?} -> {back:?}");
            }
        }
    }
}
