/// A function known to be monotone on `[lo, hi]`.
pub struct Monotone1D<F> {
    pub g: F,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl<F: Fn(f64) -> f64> Monotone1D<F> {
    pub fn new(g: F, lo: f64, hi: f64, tol: f64) -> Self {
        Self { g, lo, hi, tol }
    }
}

/// Root of a monotone function, bracketed to width `tol`. Returns `None` when
/// the endpoints do not straddle zero (no root in the interval).
pub fn bisect_root<F: Fn(f64) -> f64>(m: &Monotone1D<F>) -> Option<f64> {
    let (mut lo, mut hi) = (m.lo, m.hi);
    let mut g_lo = (m.g)(lo);
    let g_hi = (m.g)(hi);
    if g_lo == 0.0 {
        return Some(lo);
    }
    if g_hi == 0.0 {
        return Some(hi);
    }
    if g_lo.signum() == g_hi.signum() || !g_lo.is_finite() || !g_hi.is_finite() {
        return None;
    }
    while hi - lo > m.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = (m.g)(mid);
        if g_mid == 0.0 {
            return Some(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
