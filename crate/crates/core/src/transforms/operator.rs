use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{CoilSet, ComplexImage};
use crate::sampling::SamplingPattern;
use crate::transforms::fft::Fft2;

/// `A_ij = P_i F S_j`: coil weighting, unitary FFT, then the echo's k-space mask.
///
/// k-space is kept in native FFT order; the pattern (stored centered) is
/// remapped once at construction.
#[derive(Clone, Debug)]
pub struct SamplingOperator {
    mask: Arc<[bool]>,
    coil: Arc<ComplexImage>,
    fft: Arc<Fft2>,
}

impl SamplingOperator {
    pub fn new(pattern: &SamplingPattern, coil: &ComplexImage) -> Result<Self> {
        let fft = Arc::new(Fft2::new(coil.rows(), coil.cols()));
        Self::from_parts(pattern.native_mask().into(), Arc::new(coil.clone()), fft)
    }

    /// Build from shared parts; `mask` must already be in native FFT order.
    pub fn from_parts(mask: Arc<[bool]>, coil: Arc<ComplexImage>, fft: Arc<Fft2>) -> Result<Self> {
        if fft.dims() != coil.dims() {
            return Err(Error::DimensionMismatch {
                expected: coil.dims(),
                found: fft.dims(),
            });
        }
        if mask.len() != coil.len() {
            return Err(Error::InvalidInput(format!(
                "mask has {} entries for a {:?} coil map",
                mask.len(),
                coil.dims()
            )));
        }
        Ok(Self { mask, coil, fft })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.coil.dims()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn coil(&self) -> &ComplexImage {
        &self.coil
    }

    pub fn forward(&self, u: &ComplexImage) -> Result<ComplexImage> {
        self.coil.check_dims(u)?;
        let mut k = u.zip_map(&self.coil, |a, s| a * s);
        self.fft.forward(&mut k);
        for (v, &m) in k.as_mut_slice().iter_mut().zip(self.mask.iter()) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        Ok(k)
    }

    pub fn adjoint(&self, y: &ComplexImage) -> Result<ComplexImage> {
        self.coil.check_dims(y)?;
        let mut img = y.clone();
        for (v, &m) in img.as_mut_slice().iter_mut().zip(self.mask.iter()) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        self.fft.inverse(&mut img);
        for (v, s) in img.as_mut_slice().iter_mut().zip(self.coil.as_slice()) {
            *v *= s.conj();
        }
        Ok(img)
    }

    /// `A^* A u`.
    pub fn normal(&self, u: &ComplexImage) -> Result<ComplexImage> {
        self.adjoint(&self.forward(u)?)
    }
}

/// Operators for every (echo, coil) pair, indexed `[echo][coil]`. Masks and
/// coil maps are shared, not copied per pair.
pub fn build_operators(patterns: &[SamplingPattern], coils: &CoilSet) -> Result<Vec<Vec<SamplingOperator>>> {
    let (rows, cols) = coils.dims();
    let fft = Arc::new(Fft2::new(rows, cols));
    let maps: Vec<Arc<ComplexImage>> = coils.maps().iter().map(|m| Arc::new(m.clone())).collect();
    patterns
        .iter()
        .map(|p| {
            if p.dims() != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    expected: (rows, cols),
                    found: p.dims(),
                });
            }
            let mask: Arc<[bool]> = p.native_mask().into();
            maps.iter()
                .map(|m| SamplingOperator::from_parts(mask.clone(), m.clone(), fft.clone()))
                .collect()
        })
        .collect()
}
