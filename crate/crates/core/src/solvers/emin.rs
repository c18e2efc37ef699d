//! Pixel-wise E update: global minimization over `d = log E` of
//!
//! ```text
//! l(d) = rho/2 (x - e^d)^2 + lambda e^{2d} (d - w)^2 + b (x - e^d)
//! ```
//!
//! on a bounded interval. `l'(d) = e^d l1(d)` and `l1'(d) = e^d l2(d)` with
//! `l2` quadratic, so the roots of `l2` split the interval into pieces where
//! `l1` is monotone; each piece holds at most one stationary point, found by
//! bisection. The minimum is taken over all stationary points and piece ends.

use crate::solvers::bisect::{bisect_root, Monotone1D};

/// Roots of `l2` closer than this are treated as a double root.
const DOUBLE_ROOT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EObjective {
    pub x: f64,
    pub w: f64,
    pub b: f64,
    pub rho: f64,
    pub lambda: f64,
}

impl EObjective {
    pub fn value(&self, d: f64) -> f64 {
        let e = d.exp();
        let s = d - self.w;
        0.5 * self.rho * (self.x - e).powi(2) + self.lambda * e * e * s * s + self.b * (self.x - e)
    }

    /// `l'(d) / e^d`.
    pub fn l1(&self, d: f64) -> f64 {
        let e = d.exp();
        let s = d - self.w;
        self.rho * (e - self.x) + 2.0 * self.lambda * e * (s + s * s) - self.b
    }

    /// `l1'(d) / e^d`, a quadratic in `d`.
    pub fn l2(&self, d: f64) -> f64 {
        let s = d - self.w;
        2.0 * self.lambda * s * s + 6.0 * self.lambda * s + 2.0 * self.lambda + self.rho
    }

    /// Real roots of `l2` in increasing order, or `None` when there are fewer than two.
    pub fn l2_roots(&self) -> Option<(f64, f64)> {
        if self.lambda <= 0.0 {
            return None;
        }
        // in s = d - w: 2 lambda s^2 + 6 lambda s + (2 lambda + rho)
        let a = 2.0 * self.lambda;
        let bq = 6.0 * self.lambda;
        let c = 2.0 * self.lambda + self.rho;
        let disc = bq * bq - 4.0 * a * c;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let (s1, s2) = ((-bq - sq) / (2.0 * a), (-bq + sq) / (2.0 * a));
        if s2 - s1 < DOUBLE_ROOT_TOL {
            return None;
        }
        Some((self.w + s1, self.w + s2))
    }

    /// Breakpoints splitting `[lo, hi]` into pieces on which `l1` is monotone.
    pub fn monotone_pieces(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![lo];
        if let Some((r1, r2)) = self.l2_roots() {
            for r in [r1, r2] {
                if r > lo && r < hi {
                    cuts.push(r);
                }
            }
        }
        cuts.push(hi);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Global minimizer of [`EObjective::value`] over `[d_lo, d_hi]`; returns `(d*, l(d*))`.
#[allow(clippy::too_many_arguments)]
pub fn global_min_1d_e(x: f64, w: f64, b: f64, rho: f64, lambda: f64, d_lo: f64, d_hi: f64, tol: f64) -> (f64, f64) {
    debug_assert!(d_lo < d_hi && d_lo.is_finite() && d_hi.is_finite());
    let obj = EObjective { x, w, b, rho, lambda };
    let mut candidates = Vec::with_capacity(8);
    // exact stationary points of the two limiting cases
    if x > 0.0 {
        candidates.push(x.ln().clamp(d_lo, d_hi));
    }
    candidates.push(w.clamp(d_lo, d_hi));
    for (lo, hi) in obj.monotone_pieces(d_lo, d_hi) {
        candidates.push(lo);
        candidates.push(hi);
        if let Some(root) = bisect_root(&Monotone1D::new(|d| obj.l1(d), lo, hi, tol)) {
            candidates.push(root);
        }
    }
    let mut best = (candidates[0], obj.value(candidates[0]));
    for &d in &candidates[1..] {
        let v = obj.value(d);
        if v < best.1 {
            best = (d, v);
        }
    }
    best
}
