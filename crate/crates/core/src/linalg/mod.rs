//! Dense linear algebra for feature-map statistics.

mod eigen;
mod feature;
mod matrix;
mod stats;
mod whiten;

pub use eigen::{sym_eigen, EigenDecomposition, CONVERGENCE_TOL, MAX_SWEEPS};
pub use feature::FeatureMap;
pub use matrix::{CovarianceMatrix, MeanVector, SYMMETRY_TOL};
pub use stats::{
    compute_covariance, compute_mean, covariance_of_standardized, standardize,
    standardize_backward, standardize_with_cache, standardized_covariance, Standardized,
    STANDARDIZE_EPS,
};
pub use whiten::{inverse_sqrt, whiten, RankMode, RANK_TOL};
