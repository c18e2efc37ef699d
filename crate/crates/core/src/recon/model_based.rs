//! Baseline that fits `U_i = Z_i X0 exp(-t_i R2*)` directly to k-space:
//!
//! ```text
//! min sum_ij ||Y_ij - A_ij U_i||^2 + lambda1 ||Phi X0||_1 + lambda2 ||Phi R2*||_1
//! ```
//!
//! by alternating a closed-form phase step, a proximal-gradient step in X0
//! and a backtracking proximal-gradient step in R2*.

use std::time::Instant;

use num_complex::Complex64;

use super::decoupled::run_echo_passes;
use super::{density_from_log, fit_support, l1_norm, prepare, Setup};
use crate::error::Result;
use crate::image::{CoilSet, ComplexImage, MultiEchoSet, RealImage};
use crate::kspace::KSpaceData;
use crate::params::{ConvergenceTrace, IterationRecord, ReconParams, ReconResult};
use crate::solvers::{fista_l1_warm, QuadL1Problem};
use crate::subproblems::{theta_from_centers, weighted_log_fit, AdmmState, DataTerm, FitParams, LIPSCHITZ_SAFETY};

fn model_images(x0: &RealImage, r2star: &RealImage, theta: &MultiEchoSet<f64>) -> Vec<ComplexImage> {
    theta
        .times()
        .as_slice()
        .iter()
        .zip(theta.echoes())
        .map(|(&t, th)| {
            let (rows, cols) = x0.dims();
            ComplexImage::from_fn(rows, cols, |r, c| {
                Complex64::from_polar(x0[(r, c)] * (-t * r2star[(r, c)]).exp(), th[(r, c)])
            })
        })
        .collect()
}

/// `sum_ij ||Y_ij - A_ij Z_i X0 exp(-t_i R2*)||^2`.
pub fn model_data_term(dt: &DataTerm<'_>, x0: &RealImage, r2star: &RealImage, theta: &MultiEchoSet<f64>) -> Result<f64> {
    model_images(x0, r2star, theta)
        .iter()
        .enumerate()
        .map(|(i, u)| dt.misfit(i, u))
        .sum()
}

/// Gradient of [`model_data_term`] with respect to X0 and R2*.
pub fn model_data_gradient(
    dt: &DataTerm<'_>,
    x0: &RealImage,
    r2star: &RealImage,
    theta: &MultiEchoSet<f64>,
) -> Result<(RealImage, RealImage)> {
    let (rows, cols) = x0.dims();
    let mut gx = RealImage::zeros(rows, cols);
    let mut gr = RealImage::zeros(rows, cols);
    let times = theta.times().as_slice();
    for (i, u) in model_images(x0, r2star, theta).iter().enumerate() {
        let t = times[i];
        let th = &theta.echoes()[i];
        let mut g = ComplexImage::zeros(rows, cols);
        for j in 0..dt.ops()[i].len() {
            let gij = dt.residual_image(i, j, u)?;
            for (a, b) in g.as_mut_slice().iter_mut().zip(gij.as_slice()) {
                *a += b;
            }
        }
        for p in 0..rows * cols {
            let decay = (-t * r2star.as_slice()[p]).exp();
            let z = Complex64::from_polar(1.0, th.as_slice()[p]);
            // Re(conj(Z) G)
            let proj = (z.conj() * g.as_slice()[p]).re;
            gx.as_mut_slice()[p] += 2.0 * decay * proj;
            gr.as_mut_slice()[p] -= 2.0 * t * x0.as_slice()[p] * decay * proj;
        }
    }
    Ok((gx, gr))
}

fn sum_kappa(dt: &DataTerm<'_>) -> f64 {
    dt.kappas().iter().flatten().sum()
}

/// Model-based reconstruction. Starts from a few unregularized per-echo
/// passes (no multi-echo coupling) followed by an unregularized log fit.
pub fn recon_model_based(data: &KSpaceData, coils: &CoilSet, params: &ReconParams) -> Result<ReconResult> {
    let Setup { dt, frame } = prepare(data, coils, params)?;
    let start = Instant::now();
    let (rows, cols) = data.dims();
    let times = data.times().as_slice().to_vec();

    let mut seed = AdmmState::zeros(rows, cols, data.times());
    let init_params = ReconParams {
        lambda1: 0.0,
        ..params.clone()
    };
    run_echo_passes(
        &mut seed,
        &dt,
        &init_params,
        &frame,
        params.warm_start_iters.max(1),
        &mut ConvergenceTrace::default(),
        start,
    )?;
    let fit = FitParams {
        lambda2: 0.0,
        lambda3: 0.0,
        ..FitParams::from_recon(params)
    };
    let (h0, mut r2) = weighted_log_fit(&seed.xi, &fit, &frame, None)?;
    let mut x0 = density_from_log(&h0, &fit_support(&seed.xi, params.e_min));
    let mut theta = seed.theta;

    let lx = sum_kappa(&dt).max(f64::MIN_POSITIVE);
    let mut lr = 0.0f64;
    let (mut x_dual, mut r_dual) = (None, None);
    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let budget = params.outer_iters * params.inner_iters;

    for _ in 0..budget {
        let (x_prev, r_prev) = (x0.clone(), r2.clone());

        // phase: angle of the kappa-weighted surrogate centers at the model images
        let u = model_images(&x0, &r2, &theta);
        let new_theta = (0..times.len())
            .map(|i| {
                let q = dt.surrogate_centers(i, &u[i])?;
                Ok(theta_from_centers(&q, &dt.kappas()[i], &theta.echoes()[i]))
            })
            .collect::<Result<Vec<_>>>()?;
        theta = MultiEchoSet::new(new_theta, data.times().clone())?;

        // X0: exact Lipschitz bound since the data term is quadratic in X0
        let (gx, _) = model_data_gradient(&dt, &x0, &r2, &theta)?;
        let center = x0.zip_map(&gx, |x, g| x - g / lx);
        let (next, dual) = fista_l1_warm(
            &QuadL1Problem {
                center: &center,
                tau: params.lambda1 / lx,
                frame: &frame,
                iters: params.fista_iters,
                tol: 1e-12,
            },
            x_dual.take(),
        );
        x0 = next.map(|&v| v.max(0.0));
        x_dual = Some(dual);

        // R2*: backtracking from a Gauss-Newton curvature estimate
        let (_, gr) = model_data_gradient(&dt, &x0, &r2, &theta)?;
        let base = model_data_term(&dt, &x0, &r2, &theta)?;
        if lr == 0.0 {
            let peak = x0.max_abs();
            lr = (times.iter().map(|t| t * t).fold(0.0, f64::max) * peak * peak * lx / LIPSCHITZ_SAFETY)
                .max(f64::MIN_POSITIVE);
        } else {
            lr *= 0.5;
        }
        let mut accepted = None;
        for _ in 0..40 {
            let center = r2.zip_map(&gr, |r, g| r - g / lr);
            let (cand, dual) = fista_l1_warm(
                &QuadL1Problem {
                    center: &center,
                    tau: params.lambda2 / lr,
                    frame: &frame,
                    iters: params.fista_iters,
                    tol: 1e-12,
                },
                r_dual.clone(),
            );
            let cand = cand.map(|&v| v.clamp(0.0, params.r_max));
            let value = model_data_term(&dt, &x0, &cand, &theta)?;
            let (mut lin, mut quad) = (0.0, 0.0);
            for ((c, r), g) in cand.as_slice().iter().zip(r2.as_slice()).zip(gr.as_slice()) {
                lin += g * (c - r);
                quad += (c - r) * (c - r);
            }
            if value <= base + lin + 0.5 * lr * quad + 1e-12 * base.abs() {
                accepted = Some((cand, dual));
                break;
            }
            lr *= 2.0;
        }
        if let Some((cand, dual)) = accepted {
            r2 = cand;
            r_dual = Some(dual);
        }

        let objective = model_data_term(&dt, &x0, &r2, &theta)?
            + if params.lambda1 > 0.0 { params.lambda1 * l1_norm(&x0, &frame) } else { 0.0 }
            + if params.lambda2 > 0.0 { params.lambda2 * l1_norm(&r2, &frame) } else { 0.0 };
        let change = pair_change(&x_prev, &r_prev, &x0, &r2);
        trace.records.push(IterationRecord {
            primal_residual: 0.0,
            objective,
            relative_change: change,
            elapsed: start.elapsed(),
        });
        if change <= params.tol_change {
            converged = true;
            break;
        }
    }

    let xi = MultiEchoSet::new(
        times
            .iter()
            .map(|&t| x0.zip_map(&r2, |x, r| x * (-t * r).exp()))
            .collect(),
        data.times().clone(),
    )?;
    let h0 = x0.map(|&x| if x > 0.0 { x.ln() } else { 0.0 });
    Ok(ReconResult {
        x0,
        r2star: r2,
        h0,
        theta,
        xi,
        trace,
        converged,
    })
}

/// Larger of the relative changes of X0 and R2*.
fn pair_change(xp: &RealImage, rp: &RealImage, x: &RealImage, r: &RealImage) -> f64 {
    let rel = |a: &RealImage, b: &RealImage| -> f64 {
        let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).powi(2)).sum();
        let base = a.norm().powi(2);
        if base == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (diff / base).sqrt()
        }
    };
    rel(xp, x).max(rel(rp, r))
}
