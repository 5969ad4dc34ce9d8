//! DWT, IW, IRW and ISW losses with handwritten gradients.

mod mask;
mod probe;
mod whitening;

pub use mask::{full_mask, SelectionMask};
pub use probe::{conflict_probe, ProbeReport};
pub use whitening::{
    dwt_loss, instance_whitening_loss, irw_loss, isw_loss, iw_loss, standardized_penalty,
    total_loss, LossConfig, LossResult, LossVariant, Normalization, TotalLoss, DEFAULT_AUX_WEIGHT,
    DEFAULT_LAMBDA, DEFAULT_MARGIN, DEFAULT_NUM_LAYERS,
};
