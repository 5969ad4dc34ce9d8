use super::{
    apply_transform, derive_mask, ClusterConfig, MaskDerivation, PhotometricTransform,
    SensitivityStats,
};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::linalg::{standardized_covariance, FeatureMap};

/// Anything that maps an image to one feature map per instrumented layer.
pub trait FeatureExtractor {
    fn num_layers(&self) -> usize;

    fn layer_features(&self, image: &RgbImage) -> Result<Vec<FeatureMap>>;
}

#[derive(Debug, Clone)]
pub struct LayerSensitivity {
    pub stats: SensitivityStats,
    pub derivation: MaskDerivation,
}

/// One `(x, τ(x))` pair per image, `draw_seed` = image index; `V` accumulated
/// per layer, then a mask derived for each layer independently.
pub fn run_sensitivity_pass<E: FeatureExtractor + ?Sized>(
    model: &E,
    images: &[RgbImage],
    t: &PhotometricTransform,
    cluster: &ClusterConfig,
) -> Result<Vec<LayerSensitivity>> {
    if images.is_empty() {
        return Err(Error::InvalidInput(
            "sensitivity pass needs at least one image".into(),
        ));
    }
    t.validate()?;
    cluster.validate()?;
    let mut stats: Vec<SensitivityStats> = Vec::new();
    for (idx, image) in images.iter().enumerate() {
        let orig = model.layer_features(image)?;
        let aug = model.layer_features(&apply_transform(image, t, idx as u64))?;
        if orig.len() != model.num_layers() || aug.len() != orig.len() {
            return Err(Error::DimensionMismatch(format!(
                "extractor reported {} layers but returned {} and {} maps",
                model.num_layers(),
                orig.len(),
                aug.len()
            )));
        }
        if stats.is_empty() {
            stats = orig
                .iter()
                .map(|f| SensitivityStats::new(f.channels()))
                .collect();
        }
        for ((s, a), b) in stats.iter_mut().zip(&orig).zip(&aug) {
            s.accumulate_pair(&standardized_covariance(a), &standardized_covariance(b))?;
        }
    }
    stats
        .into_iter()
        .map(|s| {
            let derivation = derive_mask(&s, cluster)?;
            Ok(LayerSensitivity {
                stats: s,
                derivation,
            })
        })
        .collect()
}
