use std::time::Instant;

use super::decoupled::run_echo_passes;
use super::{density_from_log, echo_objective, fit_support, l1_norm, prepare, relative_change, Setup};
use crate::error::Result;
use crate::image::{CoilSet, MultiEchoSet};
use crate::kspace::KSpaceData;
use crate::params::{ConvergenceTrace, IterationRecord, ReconParams, ReconResult};
use crate::subproblems::{
    primal_residual, update_dual, update_e, weighted_log_fit, zx_step, AdmmState, DataTerm, EStep, FitParams,
};
use crate::transforms::WaveletFrame;

/// Joint recovery by ADMM on the split `X_i = E_i`.
///
/// An optional short decoupled run (`warm_start_iters` passes) seeds the
/// phase and magnitudes. Each outer iteration then performs `inner_iters`
/// (phase, magnitude) passes, the (H0, R2*) fit on E with weights E^2, the
/// pixel-wise E update and the dual ascent step. The split variable is
/// created lazily: the first outer iteration runs the magnitude passes
/// without the coupling terms and then sets `E = X`, `B = 0`. With no warm
/// start and one outer iteration this is exactly the decoupled method.
pub fn recon_joint_admm(data: &KSpaceData, coils: &CoilSet, params: &ReconParams) -> Result<ReconResult> {
    let Setup { dt, frame } = prepare(data, coils, params)?;
    let start = Instant::now();
    let (rows, cols) = data.dims();
    let mut state = AdmmState::zeros(rows, cols, data.times());
    let mut warm_trace = ConvergenceTrace::default();
    if params.warm_start_iters > 0 {
        run_echo_passes(&mut state, &dt, params, &frame, params.warm_start_iters, &mut warm_trace, start)?;
    }

    let fit = FitParams::from_recon(params);
    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let mut e_step = EStep {
        rho: params.rho,
        lambda: params.lambda,
        e_min: params.e_min,
        e_max: params.e_max.unwrap_or(f64::INFINITY),
    };
    let mut duals = vec![None; state.echoes()];
    let mut support = fit_support(&state.xi, params.e_min);

    for k in 0..params.outer_iters {
        let prev = state.xi.clone();
        let coupled = k > 0;
        for _ in 0..params.inner_iters {
            let before = state.xi.clone();
            zx_step(&mut state, &dt, params, &frame, coupled, &mut duals)?;
            if relative_change(&before, &state.xi) <= params.tol_change {
                break;
            }
        }
        if k == 0 {
            if params.e_max.is_none() {
                let peak = state.xi.echoes().iter().map(|x| x.max_abs()).fold(0.0, f64::max);
                e_step.e_max = if peak > 0.0 { 10.0 * peak } else { 1.0 }.max(10.0 * params.e_min);
            }
            state.e = clamp_set(&state.xi, e_step.e_min, e_step.e_max);
        }

        let init = (k > 0).then(|| (state.h0.clone(), state.r2star.clone()));
        support = fit_support(&state.e, params.e_min);
        let (h0, r2) = weighted_log_fit(&state.e, &fit, &frame, init.as_ref().map(|(h, r)| (h, r)))?;
        state.h0 = h0;
        state.r2star = r2;
        state.e = update_e(&state, &e_step)?;
        state.b = update_dual(&state, params.rho);
        state.iteration += 1;

        let residual = primal_residual(&state);
        let change = relative_change(&prev, &state.xi);
        trace.records.push(IterationRecord {
            primal_residual: residual,
            objective: joint_objective(&state, &dt, params, &fit, &frame)?,
            relative_change: change,
            elapsed: start.elapsed(),
        });
        if k > 0 && residual <= params.tol_primal && change <= params.tol_change {
            converged = true;
            break;
        }
    }

    Ok(ReconResult {
        x0: density_from_log(&state.h0, &support),
        r2star: state.r2star,
        h0: state.h0,
        theta: state.theta,
        xi: state.xi,
        trace,
        converged,
    })
}

fn clamp_set(set: &MultiEchoSet<f64>, lo: f64, hi: f64) -> MultiEchoSet<f64> {
    let echoes = set.echoes().iter().map(|x| x.map(|&v| v.clamp(lo, hi))).collect();
    MultiEchoSet::new(echoes, set.times().clone()).expect("consistent")
}

/// `f + lambda g`: echo data terms and sparsity plus the weighted decay-model
/// misfit of E and the map sparsity terms.
fn joint_objective(
    state: &AdmmState,
    dt: &DataTerm<'_>,
    params: &ReconParams,
    fit: &FitParams,
    frame: &WaveletFrame,
) -> Result<f64> {
    let f = echo_objective(state, dt, params.lambda1, frame)?;
    let times = state.e.times().as_slice();
    let mut g = 0.0;
    for (e, &t) in state.e.echoes().iter().zip(times) {
        for (p, &ev) in e.as_slice().iter().enumerate() {
            let r = ev * (ev.ln() - state.h0.as_slice()[p] + t * state.r2star.as_slice()[p]);
            g += r * r;
        }
    }
    if fit.lambda2 > 0.0 {
        g += fit.lambda2 * l1_norm(&state.h0, frame);
    }
    if fit.lambda3 > 0.0 {
        g += fit.lambda3 * l1_norm(&state.r2star, frame);
    }
    Ok(f + params.lambda * g)
}
