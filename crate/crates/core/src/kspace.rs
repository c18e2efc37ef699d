use crate::error::{Error, Result};
use crate::image::{ComplexImage, EchoTimes};
use crate::sampling::EchoPatternSet;

/// Measured k-space `Y_ij`, indexed `[echo][coil]`, in native FFT order.
/// Entries outside each echo's pattern are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    samples: Vec<Vec<ComplexImage>>,
    patterns: EchoPatternSet,
    times: EchoTimes,
}

impl KSpaceData {
    pub fn new(samples: Vec<Vec<ComplexImage>>, patterns: EchoPatternSet, times: EchoTimes) -> Result<Self> {
        if samples.len() != times.len() || patterns.len() != times.len() {
            return Err(Error::InvalidInput(format!(
                "{} echo planes, {} patterns, {} echo times",
                samples.len(),
                patterns.len(),
                times.len()
            )));
        }
        let coils = samples.first().map_or(0, Vec::len);
        if coils == 0 || samples.iter().any(|s| s.len() != coils) {
            return Err(Error::InvalidInput("every echo needs the same nonzero coil count".into()));
        }
        let dims = patterns.patterns()[0].dims();
        for plane in samples.iter().flatten() {
            if plane.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: plane.dims(),
                });
            }
        }
        Ok(Self {
            samples,
            patterns,
            times,
        })
    }

    pub fn samples(&self) -> &[Vec<ComplexImage>] {
        &self.samples
    }

    pub fn patterns(&self) -> &EchoPatternSet {
        &self.patterns
    }

    pub fn times(&self) -> &EchoTimes {
        &self.times
    }

    pub fn echoes(&self) -> usize {
        self.samples.len()
    }

    pub fn coils(&self) -> usize {
        self.samples[0].len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.samples[0][0].dims()
    }

    /// Multiply every measurement by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|e| e.iter().map(|y| y.map(|v| v * c)).collect())
            .collect();
        Self {
            samples,
            patterns: self.patterns.clone(),
            times: self.times.clone(),
        }
    }

    /// First `keep` echoes (2 <= keep <= E).
    pub fn truncated(&self, keep: usize) -> Result<Self> {
        let times = self.times.truncated(keep)?;
        Ok(Self {
            samples: self.samples[..keep].to_vec(),
            patterns: self.patterns.truncated(keep),
            times,
        })
    }
}
