//! Binary PGM (P5) heatmaps of matrix magnitudes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Heatmap {
    /// Maps `|entry|` (optionally `log10(|entry| + 1e-12)`) min-max scaled
    /// onto 0..=255. A zero range renders black.
    pub fn from_matrix(dim: usize, values: &[f64], log_scale: bool) -> Result<Self> {
        if dim == 0 || values.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "heatmap needs a square matrix, got {} values for dim {dim}",
                values.len()
            )));
        }
        let mags: Vec<f64> = values
            .iter()
            .map(|v| {
                let a = v.abs();
                if log_scale {
                    (a + 1e-12).log10()
                } else {
                    a
                }
            })
            .collect();
        if mags.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("heatmap matrix".into()));
        }
        let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let pixels = mags
            .iter()
            .map(|&m| {
                if range <= 0.0 {
                    0
                } else {
                    (((m - lo) / range) * 255.0).round().clamp(0.0, 255.0) as u8
                }
            })
            .collect();
        Ok(Self {
            width: dim,
            height: dim,
            pixels,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |d: &str| Error::format("PGM", d.to_string());
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected P5 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let pixels = bytes
            .get(pos..)
            .ok_or_else(|| bad("missing raster"))?
            .to_vec();
        if pixels.len() != width * height {
            return Err(bad("raster size does not match header"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Mean intensity over off-diagonal pixels.
    pub fn mean_off_diagonal(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.height {
            for j in 0..self.width {
                if i != j {
                    sum += f64::from(self.pixels[i * self.width + j]);
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
