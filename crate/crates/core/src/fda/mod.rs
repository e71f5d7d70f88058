//! Numerical substrate: grids, quadrature, curves, kernels and dense
//! symmetric linear algebra.

pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod panel;

pub use grid::{inner_product, integrate, Curve, FourierBasis, Grid};
pub use kernel::{
    hs_norm, integrated_outer, kernel_matmul, kernel_sym_eigen, stacked_gram, w_contraction, Kernel,
    KernelEigen, KernelMatrix, KernelProduct, ProductMode,
};
pub use linalg::{inv_sqrt, inv_sqrt_default, orthonormalize_columns, spectral_radius, sym_eigen, sym_sqrt, SymEigen};
pub use panel::{apply_matrix_to_row, CurvePanel};
