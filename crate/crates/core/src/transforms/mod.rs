//! Fourier sampling operator and the sparsifying wavelet frame.

pub mod fft;
pub mod frame;
pub mod operator;
pub mod wavelet;

pub use fft::Fft2;
pub use frame::{soft_threshold, WaveletFrame, DEFAULT_LEVELS};
pub use operator::{build_operators, SamplingOperator};
pub use wavelet::Daubechies;
