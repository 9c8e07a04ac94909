//! Shared numerical kernels: dense matrices, symmetric eigendecomposition,
//! nonnegative least squares and damped nonlinear least squares.

pub mod eigen;
pub mod lm;
pub mod mat;
pub mod nnls;

pub use eigen::{sym_eigen, top_eigenpairs, EigenResult};
pub use lm::{lm_fit, LmConfig, LmFit};
pub use mat::{cholesky, dot, invert_spd, lstsq, norm2, solve_spd, Mat};
pub use nnls::nnls;
