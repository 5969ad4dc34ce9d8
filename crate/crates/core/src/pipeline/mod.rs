//! Desk-scale segmentation pipeline: synthetic two-domain scenes, a small
//! conv net with instance standardization after each of its three blocks, and
//! two-phase training with the whitening losses.

mod checkpoint;
mod dataset;
mod eval;
mod layers;
mod model;
mod scene;
mod train;
mod xent;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry};
pub use dataset::{
    load_dataset, save_dataset, DatasetManifest, SceneEntry, IMAGES_FILE, LABELS_FILE,
    MANIFEST_FILE,
};
pub use eval::{evaluate_miou, ConfusionMatrix, Metrics};
pub use model::{argmax_classes, ForwardPass, NetConfig, Network, ParamSpec, NUM_BLOCKS};
pub use scene::{
    content_seed, draw_style, generate_dataset, render_content, render_scene, SceneConfig,
    SceneStyle, StyleDomain, SyntheticScene,
};
pub use train::{
    instance_objective, masked_covariance_means, mean_abs_covariances, poly_lr, train,
    write_log_csv, InstanceLoss, LogRow, Phase, SuppressionReport, TrainConfig, TrainOutput,
    TrainState, TrainVariant, SUPPRESSION_PROBE,
};
pub use xent::cross_entropy;
