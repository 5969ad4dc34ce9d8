//! Instance selective whitening.
//!
//! Channel covariance statistics of feature maps, the DWT/IW/IRW/ISW loss
//! family with analytic gradients, photometric-sensitivity-based selection of
//! style-encoding covariance entries, and a small two-phase segmentation
//! training pipeline that exercises all of it.

pub mod cli;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod pipeline;
pub mod sensitivity;

pub use error::{Error, Result};
