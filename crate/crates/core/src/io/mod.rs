//! On-disk formats: SWT1 tensors, CSV matrices, PGM heatmaps.

mod matrix_csv;
mod pgm;
pub mod swt1;

pub use matrix_csv::{read_matrix_csv, write_mask_csv, write_matrix_csv, SquareMatrix};
pub use pgm::Heatmap;
pub use swt1::{read_tensor, write_tensor, Tensor};
