//! Compressive-sensing R2* mapping from undersampled multi-coil, multi-echo
//! k-space.
//!
//! Three reconstruction pipelines are provided in [`recon`]: a decoupled
//! two-stage method (per-echo CS recovery followed by a weighted log-linear
//! fit), a joint method that couples both stages through ADMM, and a
//! model-based baseline that fits the exponential signal model directly to
//! k-space. [`phantom`] and [`sampling`] generate synthetic acquisitions to
//! evaluate them.

pub mod error;
pub mod image;
pub mod io;
pub mod kspace;
pub mod params;
pub mod recon;
pub mod phantom;
pub mod sampling;
pub mod scenario;
pub mod solvers;
pub mod subproblems;
pub mod transforms;

pub use error::{Error, Result};
pub use image::{
    image_linf_diff, masked_relative_error, CoilSet, ComplexImage, EchoTimes, Image, MultiEchoSet, RealImage,
};
pub use kspace::KSpaceData;
pub use params::{ConvergenceTrace, IterationRecord, ReconParams, ReconResult};
pub use recon::ReconMethod;
