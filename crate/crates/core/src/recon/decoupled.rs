use std::time::Instant;

use super::{density_from_log, echo_objective, fit_support, prepare, relative_change, Setup};
use crate::error::Result;
use crate::image::CoilSet;
use crate::kspace::KSpaceData;
use crate::params::{ConvergenceTrace, IterationRecord, ReconParams, ReconResult};
use crate::subproblems::{weighted_log_fit, zx_step, AdmmState, DataTerm, FitParams};
use crate::transforms::WaveletFrame;

/// Echo images recovered by the first stage of the decoupled method.
#[derive(Clone, Debug)]
pub struct EchoRecovery {
    pub state: AdmmState,
    pub trace: ConvergenceTrace,
    pub converged: bool,
}

/// Run up to `budget` uncoupled (phase, magnitude) passes from `state`,
/// stopping once the relative change of the magnitudes drops below
/// `tol_change`. One trace record is written per `inner_iters` passes (and at
/// the stop). Returns whether the tolerance was reached.
pub(super) fn run_echo_passes(
    state: &mut AdmmState,
    dt: &DataTerm<'_>,
    params: &ReconParams,
    frame: &WaveletFrame,
    budget: usize,
    trace: &mut ConvergenceTrace,
    start: Instant,
) -> Result<bool> {
    let mut duals = vec![None; state.echoes()];
    let mut group_start = state.xi.clone();
    for pass in 0..budget {
        let prev = state.xi.clone();
        zx_step(state, dt, params, frame, false, &mut duals)?;
        state.iteration += 1;
        let done = relative_change(&prev, &state.xi) <= params.tol_change;
        if done || (pass + 1) % params.inner_iters == 0 || pass + 1 == budget {
            trace.records.push(IterationRecord {
                primal_residual: 0.0,
                objective: echo_objective(state, dt, params.lambda1, frame)?,
                relative_change: relative_change(&group_start, &state.xi),
                elapsed: start.elapsed(),
            });
            group_start = state.xi.clone();
        }
        if done {
            return Ok(true);
        }
    }
    Ok(false)
}

/// First stage only: per-echo recovery of phase and magnitude from zero
/// images, with a budget of `outer_iters * inner_iters` passes.
pub fn recover_echo_images(data: &KSpaceData, coils: &CoilSet, params: &ReconParams) -> Result<EchoRecovery> {
    let Setup { dt, frame } = prepare(data, coils, params)?;
    let (rows, cols) = data.dims();
    let mut state = AdmmState::zeros(rows, cols, data.times());
    let mut trace = ConvergenceTrace::default();
    let converged = run_echo_passes(
        &mut state,
        &dt,
        params,
        &frame,
        params.outer_iters * params.inner_iters,
        &mut trace,
        Instant::now(),
    )?;
    Ok(EchoRecovery { state, trace, converged })
}

/// Decoupled recovery: per-echo sparse recovery of the echo images, then a
/// weighted log-linear fit of (H0, R2*) with weights X_i^2.
pub fn recon_decoupled(data: &KSpaceData, coils: &CoilSet, params: &ReconParams) -> Result<ReconResult> {
    let EchoRecovery {
        mut state,
        trace,
        converged,
    } = recover_echo_images(data, coils, params)?;
    let (rows, cols) = data.dims();
    let frame = WaveletFrame::sparsity_averaging(rows, cols, params.wavelet_levels);
    let (h0, r2star) = weighted_log_fit(&state.xi, &FitParams::from_recon(params), &frame, None)?;
    let support = fit_support(&state.xi, params.e_min);
    state.h0 = h0;
    state.r2star = r2star;
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
