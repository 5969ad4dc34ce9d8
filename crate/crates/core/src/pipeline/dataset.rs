//! Dataset directory: `images.swt` (N×3×H×W), `labels.swt` (N×H×W) and
//! `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{SceneStyle, SyntheticScene};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::io::{read_tensor, write_tensor, Tensor};

pub const IMAGES_FILE: &str = "images.swt";
pub const LABELS_FILE: &str = "labels.swt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub content_seed: u64,
    pub style: SceneStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub domain: String,
    pub num_scenes: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub scenes: Vec<SceneEntry>,
}

pub fn save_dataset(
    dir: &Path,
    scenes: &[SyntheticScene],
    manifest: &DatasetManifest,
) -> Result<()> {
    if scenes.len() != manifest.num_scenes {
        return Err(Error::InvalidInput(
            "manifest scene count does not match".into(),
        ));
    }
    let (h, w) = (manifest.height, manifest.width);
    let mut images = Vec::with_capacity(scenes.len() * 3 * h * w);
    let mut labels = Vec::with_capacity(scenes.len() * h * w);
    for s in scenes {
        if s.image.height() != h || s.image.width() != w {
            return Err(Error::DimensionMismatch("scenes differ in size".into()));
        }
        images.extend_from_slice(s.image.as_feature_map().as_slice());
        labels.extend(s.labels.iter().map(|&l| l as f64));
    }
    let n = scenes.len() as u64;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(
        &dir.join(IMAGES_FILE),
        &Tensor::new(vec![n, 3, h as u64, w as u64], images)?,
    )?;
    write_tensor(
        &dir.join(LABELS_FILE),
        &Tensor::new(vec![n, h as u64, w as u64], labels)?,
    )?;
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<(Vec<SyntheticScene>, DatasetManifest)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format("dataset manifest", e.to_string()))?;
    let (n, h, w) = (manifest.num_scenes, manifest.height, manifest.width);
    if manifest.scenes.len() != n {
        return Err(Error::format(
            "dataset manifest",
            "scene list length differs from num_scenes",
        ));
    }
    let images = read_tensor(&dir.join(IMAGES_FILE))?;
    let labels = read_tensor(&dir.join(LABELS_FILE))?;
    if images.dims != [n as u64, 3, h as u64, w as u64]
        || labels.dims != [n as u64, h as u64, w as u64]
    {
        return Err(Error::format(
            "dataset",
            format!(
                "tensor dims {:?} / {:?} disagree with the manifest",
                images.dims, labels.dims
            ),
        ));
    }
    let mut scenes = Vec::with_capacity(n);
    for (i, entry) in manifest.scenes.iter().enumerate() {
        let img = images.data[i * 3 * h * w..(i + 1) * 3 * h * w].to_vec();
        let lab = labels.data[i * h * w..(i + 1) * h * w]
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < manifest.num_classes {
                    Ok(v as usize)
                } else {
                    Err(Error::format("dataset", format!("invalid label value {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        scenes.push(SyntheticScene {
            image: RgbImage::new(h, w, img)?,
            labels: lab,
            style: entry.style,
            content_seed: entry.content_seed,
        });
    }
    Ok((scenes, manifest))
}
