//! Numerical kernels: l1-regularized denoising over the wavelet frame,
//! operator-norm estimation, bisection and the bounded 1-D global minimizer
//! behind the pixel-wise E update.

pub mod bisect;
pub mod emin;
pub mod fista;
pub mod power;

pub use bisect::{bisect_root, Monotone1D};
pub use emin::{global_min_1d_e, EObjective};
pub use fista::{fista_l1, fista_l1_warm, l1_objective, QuadL1Problem};
pub use power::power_iteration_norm;
