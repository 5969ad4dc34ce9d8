//! Identifies style-sensitive covariance entries from their variance under
//! photometric transformation.

mod derive;
mod kmeans;
mod pass;
mod photometric;
mod stats;

pub use derive::{derive_mask, ClusterConfig, MaskDerivation, MaskStatus, LOG_OFFSET};
pub use kmeans::{kmeans_1d, within_cluster_sse, KMeans1d};
pub use pass::{run_sensitivity_pass, FeatureExtractor, LayerSensitivity};
pub use photometric::{
    apply_draw, apply_transform, gaussian_blur, gaussian_kernel, JitterDraw, PhotometricTransform,
    Range,
};
pub use stats::SensitivityStats;
