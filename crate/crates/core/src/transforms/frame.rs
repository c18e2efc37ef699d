//! Sparsity-averaging tight frame: concatenated orthonormal Daubechies bases
//! scaled by `1/sqrt(member count)`, so `adjoint(forward(x)) == x`.

use crate::error::{Error, Result};
use crate::image::RealImage;
use crate::transforms::wavelet::Daubechies;

pub const DEFAULT_LEVELS: usize = 4;

#[derive(Clone, Debug)]
pub struct WaveletFrame {
    rows: usize,
    cols: usize,
    padded_rows: usize,
    padded_cols: usize,
    levels: usize,
    members: Vec<Daubechies>,
    scale: f64,
    penalize_coarse: bool,
}

impl WaveletFrame {
    /// Db1..Db8 concatenation with the given decomposition depth.
    pub fn sparsity_averaging(rows: usize, cols: usize, levels: usize) -> Self {
        Self::with_members(rows, cols, levels, &[1, 2, 3, 4, 5, 6, 7, 8]).expect("valid orders")
    }

    /// Single orthonormal basis (scale 1).
    pub fn single(order: usize, rows: usize, cols: usize, levels: usize) -> Result<Self> {
        Self::with_members(rows, cols, levels, &[order])
    }

    pub fn with_members(rows: usize, cols: usize, levels: usize, orders: &[usize]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("frame dimensions must be positive".into()));
        }
        if orders.is_empty() {
            return Err(Error::InvalidInput("frame needs at least one member".into()));
        }
        let members = orders
            .iter()
            .map(|&o| {
                Daubechies::new(o)
                    .ok_or_else(|| Error::InvalidInput(format!("unsupported Daubechies order {o}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let block = 1usize << levels;
        let pad = |n: usize| n.div_ceil(block) * block;
        Ok(Self {
            rows,
            cols,
            padded_rows: pad(rows),
            padded_cols: pad(cols),
            levels,
            scale: 1.0 / (members.len() as f64).sqrt(),
            members,
            penalize_coarse: false,
        })
    }

    /// Whether [`WaveletFrame::penalty`] includes the coarse approximation
    /// band. Off by default: that band carries the image mean, and shrinking
    /// it biases intensities.
    pub fn with_coarse_penalty(mut self, on: bool) -> Self {
        self.penalize_coarse = on;
        self
    }

    pub fn penalizes_coarse(&self) -> bool {
        self.penalize_coarse
    }

    /// Length of the leading unpenalized block within each member.
    fn free_len(&self) -> usize {
        if self.penalize_coarse {
            0
        } else {
            (self.padded_rows >> self.levels) * (self.padded_cols >> self.levels)
        }
    }

    /// Whether coefficient `k` enters the l1 penalty.
    #[inline]
    pub fn is_penalized(&self, k: usize) -> bool {
        k % self.member_len() >= self.free_len()
    }

    /// Sum of `|c_k|` over penalized coefficients.
    pub fn penalty(&self, coeffs: &[f64]) -> f64 {
        let n = self.member_len();
        let free = self.free_len();
        coeffs.chunks(n).flat_map(|m| &m[free.min(m.len())..]).map(|c| c.abs()).sum()
    }

    /// `penalty(forward(x))`.
    pub fn penalty_of(&self, x: &RealImage) -> f64 {
        self.penalty(&self.forward(x).expect("frame dims match"))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    fn member_len(&self) -> usize {
        self.padded_rows * self.padded_cols
    }

    pub fn coeff_len(&self) -> usize {
        self.members.len() * self.member_len()
    }

    /// Frame analysis. Members in order Db1..Db8, each member's sub-bands
    /// coarse to fine (`LL_J`, then the three detail bands of level J, ..., level 1).
    pub fn forward(&self, x: &RealImage) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.coeff_len()];
        self.forward_into(x, &mut out)?;
        Ok(out)
    }

    /// [`WaveletFrame::forward`] into a caller buffer of length [`WaveletFrame::coeff_len`].
    pub fn forward_into(&self, x: &RealImage, out: &mut [f64]) -> Result<()> {
        if x.dims() != (self.rows, self.cols) {
            return Err(Error::DimensionMismatch {
                expected: (self.rows, self.cols),
                found: x.dims(),
            });
        }
        if out.len() != self.coeff_len() {
            return Err(Error::InvalidInput(format!(
                "coefficient buffer has {} entries, need {}",
                out.len(),
                self.coeff_len()
            )));
        }
        let n = self.member_len();
        let bands = self.bands();
        let mut buf = vec![0.0; n];
        for (m, wavelet) in self.members.iter().enumerate() {
            self.pad_into(x, &mut buf);
            wavelet.forward_2d(&mut buf, self.padded_rows, self.padded_cols, self.levels);
            self.pyramid_to_bands(&bands, &buf, &mut out[m * n..(m + 1) * n]);
        }
        out.iter_mut().for_each(|v| *v *= self.scale);
        Ok(())
    }

    /// Frame synthesis (the adjoint of [`WaveletFrame::forward`]).
    pub fn adjoint(&self, coeffs: &[f64]) -> Result<RealImage> {
        let mut out = RealImage::zeros(self.rows, self.cols);
        self.adjoint_into(coeffs, &mut out)?;
        Ok(out)
    }

    /// [`WaveletFrame::adjoint`] into a caller image of the frame's dimensions.
    pub fn adjoint_into(&self, coeffs: &[f64], out: &mut RealImage) -> Result<()> {
        if coeffs.len() != self.coeff_len() {
            return Err(Error::InvalidInput(format!(
                "expected {} frame coefficients, got {}",
                self.coeff_len(),
                coeffs.len()
            )));
        }
        if out.dims() != (self.rows, self.cols) {
            return Err(Error::DimensionMismatch {
                expected: (self.rows, self.cols),
                found: out.dims(),
            });
        }
        let n = self.member_len();
        let bands = self.bands();
        let mut acc = vec![0.0; n];
        let mut buf = vec![0.0; n];
        for (m, wavelet) in self.members.iter().enumerate() {
            self.bands_to_pyramid(&bands, &coeffs[m * n..(m + 1) * n], &mut buf);
            wavelet.inverse_2d(&mut buf, self.padded_rows, self.padded_cols, self.levels);
            acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        for r in 0..self.rows {
            let src = &acc[r * self.padded_cols..r * self.padded_cols + self.cols];
            let dst = &mut out.as_mut_slice()[r * self.cols..(r + 1) * self.cols];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = s * self.scale);
        }
        Ok(())
    }

    fn pad_into(&self, x: &RealImage, buf: &mut [f64]) {
        buf.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.rows {
            let src = &x.as_slice()[r * self.cols..(r + 1) * self.cols];
            buf[r * self.padded_cols..r * self.padded_cols + self.cols].copy_from_slice(src);
        }
    }

    /// Sub-band rectangles (row0, col0, h, w) in coarse-to-fine order.
    fn bands(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::with_capacity(3 * self.levels + 1);
        let h = self.padded_rows >> self.levels;
        let w = self.padded_cols >> self.levels;
        out.push((0, 0, h, w));
        for level in (1..=self.levels).rev() {
            let h = self.padded_rows >> level;
            let w = self.padded_cols >> level;
            out.push((0, w, h, w));
            out.push((h, 0, h, w));
            out.push((h, w, h, w));
        }
        out
    }

    fn pyramid_to_bands(&self, bands: &[(usize, usize, usize, usize)], pyr: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for &(r0, c0, h, w) in bands {
            for r in r0..r0 + h {
                let start = r * self.padded_cols + c0;
                out[k..k + w].copy_from_slice(&pyr[start..start + w]);
                k += w;
            }
        }
    }

    fn bands_to_pyramid(&self, bands: &[(usize, usize, usize, usize)], coeffs: &[f64], pyr: &mut [f64]) {
        let mut k = 0;
        for &(r0, c0, h, w) in bands {
            for r in r0..r0 + h {
                let start = r * self.padded_cols + c0;
                pyr[start..start + w].copy_from_slice(&coeffs[k..k + w]);
                k += w;
            }
        }
    }
}

/// Entrywise `sign(c) * max(|c| - tau, 0)`.
pub fn soft_threshold(coeffs: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be nonnegative, got {tau}")));
    }
    Ok(coeffs.iter().map(|&c| shrink(c, tau)).collect())
}

#[inline]
pub(crate) fn shrink(c: f64, tau: f64) -> f64 {
    let a = c.abs() - tau;
    if a > 0.0 {
        a.copysign(c)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(rows: usize, cols: usize, seed: u64) -> RealImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(&[3.0], 1.0).unwrap(), vec![2.0]);
        assert_eq!(soft_threshold(&[-0.5], 1.0).unwrap(), vec![0.0]);
        assert_eq!(soft_threshold(&[-2.5, 0.1], 0.0).unwrap(), vec![-2.5, 0.1]);
        assert!(soft_threshold(&[1.0], -1e-3).is_err());
    }

    #[test]
    fn soft_threshold_minimizes_scalar_objective() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c: f64 = rng.gen_range(-3.0..3.0);
            let tau: f64 = rng.gen_range(0.0..2.0);
            let z = shrink(c, tau);
            let obj = |z: f64| 0.5 * (z - c).powi(2) + tau * z.abs();
            let grid_min = (-40000..=40000)
                .map(|k| obj(k as f64 * 1e-4))
                .fold(f64::INFINITY, f64::min);
            assert!(obj(z) <= grid_min + 1e-12);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let frame = WaveletFrame::sparsity_averaging(16, 16, 3);
        let c = frame.forward(&RealImage::zeros(16, 16)).unwrap();
        assert_eq!(c.len(), 8 * 256);
        assert!(c.iter().all(|&v| v == 0.0));
        let back = frame.adjoint(&vec![0.0; c.len()]).unwrap();
        assert!(back.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tight_frame_and_parseval_non_dyadic() {
        let frame = WaveletFrame::sparsity_averaging(20, 13, 2);
        let x = random_image(20, 13, 4);
        let c = frame.forward(&x).unwrap();
        let norm_c = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm_c - x.norm()).abs() <= 1e-10 * x.norm());
        let back = frame.adjoint(&c).unwrap();
        let err = crate::image::image_linf_diff(&back, &x).unwrap();
        assert!(err <= 1e-10 * x.max_abs());
    }

    #[test]
    fn single_haar_member_is_orthonormal_dwt() {
        let frame = WaveletFrame::single(1, 2, 2, 1).unwrap();
        let x = RealImage::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = frame.forward(&x).unwrap();
        // LL, then the top-right, bottom-left and bottom-right details
        let expected = [5.0, -1.0, -2.0, 0.0];
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{c:?}");
        }
        let back = frame.adjoint(&c).unwrap();
        assert!(crate::image::image_linf_diff(&back, &x).unwrap() < 1e-14);
    }

    #[test]
    fn adjoint_rejects_wrong_length() {
        let frame = WaveletFrame::sparsity_averaging(8, 8, 2);
        assert!(frame.adjoint(&[0.0; 10]).is_err());
        assert!(frame.forward(&RealImage::zeros(4, 8)).is_err());
    }

    #[test]
    fn piecewise_constant_is_sparse_under_haar() {
        let n = 64;
        let x = RealImage::from_fn(n, n, |r, c| if r < 24 && c < 40 { 1.0 } else { 0.25 });
        let frame = WaveletFrame::sparsity_averaging(n, n, 4);
        let c = frame.forward(&x).unwrap();
        let haar = &c[..n * n];
        let nonzeros = haar.iter().filter(|v| v.abs() > 1e-9).count();
        // the edge is 64 pixels long; each level touches O(edge / 2^level) coefficients
        assert!(nonzeros <= 2 * 64 + 16, "{nonzeros} nonzeros");
    }
}
