use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::image::ComplexImage;

/// Unitary 2-D FFT (scaled by 1/sqrt(N) in both directions). Plans are shared
/// and immutable; scratch buffers are allocated per call.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            scale: 1.0 / ((rows * cols) as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, img: &mut ComplexImage) {
        self.run(img, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, img: &mut ComplexImage) {
        self.run(img, &self.row_inv, &self.col_inv);
    }

    fn run(&self, img: &mut ComplexImage, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(img.dims(), (self.rows, self.cols), "fft dimension mismatch");
        let data = img.as_mut_slice();
        row.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
        for v in data.iter_mut() {
            *v *= self.scale;
        }
    }
}

/// Map a centered (DC in the middle) grid index to native FFT order.
#[inline]
pub fn centered_to_native(idx: usize, n: usize) -> usize {
    (idx + n - n / 2) % n
}
