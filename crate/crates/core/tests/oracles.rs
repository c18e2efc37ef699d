//! Solver outputs against independent reference solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2star_core::image::{ComplexImage, EchoTimes, MultiEchoSet, RealImage};
use t2star_core::solvers::fista::{fista_l1, l1_objective, QuadL1Problem};
use t2star_core::subproblems::{log_fit_objective, weighted_log_fit, FitParams, XiStep};
use t2star_core::transforms::WaveletFrame;

fn random_image(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> RealImage {
    RealImage::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

/// Dense rows of the analysis operator, one image per coefficient.
fn frame_rows(frame: &WaveletFrame) -> Vec<Vec<f64>> {
    let n = frame.coeff_len();
    (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            frame.adjoint(&e).unwrap().into_vec()
        })
        .collect()
}

/// `argmin 1/2 ||x - v||^2 + tau ||Phi x||_1` by exact coordinate descent on
/// the box-constrained dual, with an explicit matrix.
fn prox_by_dual_coordinate_descent(v: &RealImage, tau: f64, frame: &WaveletFrame, sweeps: usize) -> RealImage {
    let rows = frame_rows(frame);
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|a| a * a).sum()).collect();
    let bound: Vec<f64> = (0..rows.len()).map(|k| if frame.is_penalized(k) { tau } else { 0.0 }).collect();
    let mut z = vec![0.0; rows.len()];
    let mut x = v.as_slice().to_vec();
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for k in 0..rows.len() {
            if norms[k] == 0.0 {
                continue;
            }
            let g: f64 = rows[k].iter().zip(&x).map(|(a, b)| a * b).sum();
            let new = (z[k] + g / norms[k]).clamp(-bound[k], bound[k]);
            let d = new - z[k];
            if d != 0.0 {
                for (xi, a) in x.iter_mut().zip(&rows[k]) {
                    *xi -= d * a;
                }
                z[k] = new;
                moved = moved.max(d.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    RealImage::from_vec(v.rows(), v.cols(), x).unwrap()
}

#[test]
fn analysis_prox_matches_coordinate_descent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (frame, tau) in [
        (WaveletFrame::sparsity_averaging(8, 8, 2), 0.05),
        (WaveletFrame::sparsity_averaging(8, 8, 2), 0.3),
        (WaveletFrame::sparsity_averaging(8, 8, 2).with_coarse_penalty(true), 0.1),
        (WaveletFrame::with_members(8, 8, 1, &[1, 3]).unwrap(), 0.2),
    ] {
        let v = random_image(8, 8, -1.0, 1.0, &mut rng);
        let oracle = prox_by_dual_coordinate_descent(&v, tau, &frame, 20_000);
        let x = fista_l1(&QuadL1Problem { center: &v, tau, frame: &frame, iters: 20_000, tol: 1e-15 });
        let f_oracle = l1_objective(&oracle, &v, tau, &frame);
        let f = l1_objective(&x, &v, tau, &frame);
        assert!(f - f_oracle <= 1e-6, "gap {} (fista {f}, oracle {f_oracle})", f - f_oracle);
        assert!(f_oracle - f <= 1e-6, "oracle not converged: {f_oracle} vs {f}");
    }
}

#[test]
fn magnitude_step_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (rows, cols) = (16, 16);
    let frame = WaveletFrame::sparsity_averaging(rows, cols, 2);
    let theta = random_image(rows, cols, 0.0, std::f64::consts::TAU, &mut rng);
    let mag = random_image(rows, cols, 2.0, 3.0, &mut rng);
    let centers: Vec<ComplexImage> = (0..2)
        .map(|_| {
            ComplexImage::from_fn(rows, cols, |r, c| {
                let jitter = num_complex::Complex64::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
                num_complex::Complex64::from_polar(mag[(r, c)], theta[(r, c)]) + jitter
            })
        })
        .collect();
    let kappas = [0.7, 1.3];
    let b = random_image(rows, cols, -0.1, 0.1, &mut rng);
    let e = random_image(rows, cols, 2.0, 3.0, &mut rng);
    let step = XiStep {
        centers: &centers,
        kappas: &kappas,
        theta: &theta,
        coupling: Some((&b, &e, 0.5)),
        lambda1: 0.02,
        frame: &frame,
        fista_iters: 5000,
    };
    let (x, _) = step.solve(&RealImage::zeros(rows, cols), None);

    let (v, weight) = step.prox_center();
    let oracle = prox_by_dual_coordinate_descent(&v, step.lambda1 / weight, &frame, 20_000);
    // the nonnegativity clamp is inactive for these magnitudes
    assert!(oracle.as_slice().iter().all(|&a| a > 0.0));
    let gap = step.objective(&x) - step.objective(&oracle);
    assert!(gap <= 1e-5, "gap {gap}");
}

#[test]
fn regularized_log_fit_matches_long_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (rows, cols) = (32, 32);
    let times = EchoTimes::uniform(4, 7.64, 5.41).unwrap();
    let x0 = RealImage::from_fn(rows, cols, |r, _| if r < 16 { 0.8 } else { 0.5 });
    let r2 = RealImage::from_fn(rows, cols, |_, c| if c < 12 { 0.03 } else { 0.07 });
    let echoes = times
        .as_slice()
        .iter()
        .map(|&t| {
            RealImage::from_fn(rows, cols, |r, c| {
                (x0[(r, c)] * (-t * r2[(r, c)]).exp() * (1.0 + rng.gen_range(-0.05..0.05))).max(0.0)
            })
        })
        .collect();
    let images = MultiEchoSet::new(echoes, times).unwrap();
    let frame = WaveletFrame::sparsity_averaging(rows, cols, 3);
    let base = FitParams {
        lambda2: 2e-3,
        lambda3: 5e-3,
        iters: 400,
        fista_iters: 4,
        tol: 1e-14,
        e_min: 1e-6,
        r_max: 1.0,
    };
    let (h, r) = weighted_log_fit(&images, &base, &frame, None).unwrap();
    let f = log_fit_objective(&images, &h, &r, &base, &frame);

    let long = FitParams { iters: 4000, ..base };
    let mut best = f64::INFINITY;
    for restart in 0..2 {
        let init = (restart > 0).then(|| {
            (
                random_image(rows, cols, -1.5, 0.0, &mut rng),
                random_image(rows, cols, 0.0, 0.1, &mut rng),
            )
        });
        let (h2, r2) = weighted_log_fit(&images, &long, &frame, init.as_ref().map(|(a, b)| (a, b))).unwrap();
        best = best.min(log_fit_objective(&images, &h2, &r2, &long, &frame));
    }
    assert!(f - best <= 1e-5, "gap {}", f - best);
}
