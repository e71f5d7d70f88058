//! Segmentation, dimension reduction and forecasting for high-dimensional
//! functional time series.

pub mod autocov;
pub mod error;
pub mod experiment;
pub mod fda;
pub mod forecast;
pub mod metrics;
pub mod segmentation;
pub mod simgen;
pub mod var;
pub mod vmfpca;

pub use error::{FtsError, Result};
pub use fda::{Curve, CurvePanel, FourierBasis, Grid, Kernel, KernelMatrix};
