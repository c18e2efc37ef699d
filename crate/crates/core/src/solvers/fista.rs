//! Proximal operator of the analysis l1 norm over a tight frame,
//!
//! ```text
//! min_x 1/2 ||x - v||^2 + tau ||Phi x||_1
//! ```
//!
//! solved by accelerated projected gradient on the dual (`||z||_inf <= tau`,
//! `x = v - Phi^* z`). Since `Phi Phi^*` has norm one the step is one. Started
//! from `z = 0`, the first primal iterate is `Phi^* soft(Phi v, tau)`.

use crate::image::RealImage;
use crate::transforms::frame::WaveletFrame;

pub struct QuadL1Problem<'a> {
    pub center: &'a RealImage,
    pub tau: f64,
    pub frame: &'a WaveletFrame,
    pub iters: usize,
    pub tol: f64,
}

/// `1/2 ||x - v||^2 + tau ||Phi x||_1`.
pub fn l1_objective(x: &RealImage, v: &RealImage, tau: f64, frame: &WaveletFrame) -> f64 {
    let fit: f64 = x.as_slice().iter().zip(v.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * fit + tau * frame.penalty_of(x)
}

pub fn fista_l1(problem: &QuadL1Problem<'_>) -> RealImage {
    fista_l1_warm(problem, None).0
}

/// Like [`fista_l1`], optionally warm-started from a previous dual iterate.
/// Returns the best primal point seen and the final dual variable.
pub fn fista_l1_warm(problem: &QuadL1Problem<'_>, dual: Option<Vec<f64>>) -> (RealImage, Vec<f64>) {
    let QuadL1Problem {
        center: v,
        tau,
        frame,
        iters,
        tol,
    } = *problem;
    let n = frame.coeff_len();
    if tau <= 0.0 {
        return (v.clone(), vec![0.0; n]);
    }
    // unpenalized coefficients have a zero dual bound
    let bound: Vec<f64> = (0..n).map(|k| if frame.is_penalized(k) { tau } else { 0.0 }).collect();
    let warm = matches!(&dual, Some(d) if d.len() == n);
    let mut z: Vec<f64> = match dual {
        Some(d) if warm => d.iter().zip(&bound).map(|(c, b)| c.clamp(-b, *b)).collect(),
        _ => vec![0.0; n],
    };

    // a cold start evaluates v itself in the first iteration
    let mut best_obj = if warm {
        tau * frame.penalty_of(v)
    } else {
        f64::INFINITY
    };
    let mut best_x = v.clone();

    let mut y = z.clone();
    let mut z_new = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let (rows, cols) = v.dims();
    let mut synth = RealImage::zeros(rows, cols);
    let mut x_y = RealImage::zeros(rows, cols);
    let mut prev_x: Option<RealImage> = None;
    let mut t = 1.0f64;
    for _ in 0..iters.max(1) {
        // x_y = v - Phi^* y is a feasible primal point; evaluate it while we have Phi x_y
        frame.adjoint_into(&y, &mut synth).expect("coefficient length");
        for ((o, a), b) in x_y.as_mut_slice().iter_mut().zip(v.as_slice()).zip(synth.as_slice()) {
            *o = a - b;
        }
        frame.forward_into(&x_y, &mut grad).expect("frame dims match");
        let obj = 0.5 * synth.norm().powi(2) + tau * frame.penalty(&grad);
        if obj < best_obj {
            best_obj = obj;
            best_x.as_mut_slice().copy_from_slice(x_y.as_slice());
        }

        // gradient-based adaptive restart
        let mut restart_dot = 0.0;
        for ((((zn, &yi), &gi), &zo), &b) in z_new.iter_mut().zip(&y).zip(&grad).zip(&z).zip(&bound) {
            *zn = (yi + gi).clamp(-b, b);
            restart_dot += (yi - *zn) * (*zn - zo);
        }
        let restart = restart_dot > 0.0;
        let t_new = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        let momentum = if restart { 0.0 } else { (t - 1.0) / t_new };
        for ((yi, &zn), &zo) in y.iter_mut().zip(&z_new).zip(&z) {
            *yi = zn + momentum * (zn - zo);
        }
        std::mem::swap(&mut z, &mut z_new);
        t = t_new;

        match &mut prev_x {
            Some(px) => {
                let change = px
                    .as_slice()
                    .iter()
                    .zip(x_y.as_slice())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if change <= tol * x_y.norm().max(1e-12) {
                    break;
                }
                px.as_mut_slice().copy_from_slice(x_y.as_slice());
            }
            None => prev_x = Some(x_y.clone()),
        }
    }

    frame.adjoint_into(&z, &mut synth).expect("coefficient length");
    let x = v.zip_map(&synth, |a, b| a - b);
    let obj = l1_objective(&x, v, tau, frame);
    if obj <= best_obj {
        best_x = x;
    }
    (best_x, z)
}
