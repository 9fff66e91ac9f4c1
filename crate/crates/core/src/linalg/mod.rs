//! Dense linear algebra kernel.
//!
//! Row-major matrices and plain vectors, an exact SVD (column-pivoted
//! Householder QR followed by one-sided Jacobi on the triangular factor's
//! transpose), a randomized range-finder SVD for low-rank approximations,
//! symmetric eigen/Cholesky helpers for covariance handling, and the
//! vector/Schatten norms used by the spectral optimizer.

mod matrix;
mod norms;
mod svd;
mod sym;

pub use matrix::{DenseMatrix, DenseVector};
pub use norms::{schatten_norm, vector_norm, NormKind};
pub use svd::{randomized_svd, spectral_norm_estimate, svd, RandomizedSvd, SvdResult};
pub use sym::{cholesky, log_det_spd, project_spd, spd_inverse, sym_eigen, SymEigen};
