//! Grid search of the regularization weights in three groups: lambda1 on the
//! echo images, then (lambda2, lambda3) on the maps, then (lambda, rho) of the
//! joint method with the earlier groups fixed.

use super::{mean_echo_error, recon_joint_admm, recover_echo_images, density_from_log, fit_support};
use crate::error::{Error, Result};
use crate::image::{masked_relative_error, CoilSet, MultiEchoSet, RealImage};
use crate::kspace::KSpaceData;
use crate::params::ReconParams;
use crate::subproblems::{weighted_log_fit, FitParams};
use crate::transforms::WaveletFrame;

/// A slice with known ground truth.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSlice<'a> {
    pub data: &'a KSpaceData,
    pub coils: &'a CoilSet,
    pub truth_xi: &'a MultiEchoSet<f64>,
    pub truth_x0: &'a RealImage,
    pub truth_r2star: &'a RealImage,
    /// 0/1 evaluation mask.
    pub mask: &'a RealImage,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TuneGrids {
    pub lambda1: Vec<f64>,
    /// (lambda2, lambda3) pairs.
    pub lambda23: Vec<(f64, f64)>,
    /// (lambda, rho) pairs.
    pub lambda_rho: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    /// 1, 2 or 3.
    pub stage: u8,
    pub values: (f64, f64),
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub params: ReconParams,
    pub table: Vec<ScoreRow>,
    /// Best score of each stage.
    pub best: [f64; 3],
}

fn argmin(rows: &[ScoreRow]) -> &ScoreRow {
    // first minimum wins; NaN scores never do
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.score < best.score || best.score.is_nan() {
            best = r;
        }
    }
    best
}

/// Stage scores: mean echo error (1), X0 error + R2* error (2 and 3).
pub fn tune_parameters(training: &TrainingSlice<'_>, grids: &TuneGrids, base: &ReconParams) -> Result<TuneOutcome> {
    if grids.lambda1.is_empty() || grids.lambda23.is_empty() || grids.lambda_rho.is_empty() {
        return Err(Error::InvalidInput("every tuning grid needs at least one point".into()));
    }
    let map_error = |x0: &RealImage, r2: &RealImage| -> Result<f64> {
        Ok(masked_relative_error(training.truth_x0, x0, training.mask)?
            + masked_relative_error(training.truth_r2star, r2, training.mask)?)
    };
    let mut table = Vec::new();

    let mut stage1 = Vec::new();
    let mut recovered = Vec::new();
    for &l1 in &grids.lambda1 {
        let p = ReconParams { lambda1: l1, ..base.clone() };
        let rec = recover_echo_images(training.data, training.coils, &p)?;
        let score = mean_echo_error(training.truth_xi, &rec.state.xi, training.mask)?;
        stage1.push(ScoreRow { stage: 1, values: (l1, 0.0), score });
        recovered.push(rec.state.xi);
    }
    let best1 = argmin(&stage1).clone();
    let xi = &recovered[stage1.iter().position(|r| *r == best1).expect("present")];
    table.extend(stage1);

    let (rows, cols) = training.data.dims();
    let frame = WaveletFrame::sparsity_averaging(rows, cols, base.wavelet_levels);
    let support = fit_support(xi, base.e_min);
    let mut stage2 = Vec::new();
    for &(l2, l3) in &grids.lambda23 {
        let p = ReconParams { lambda2: l2, lambda3: l3, ..base.clone() };
        let (h0, r2) = weighted_log_fit(xi, &FitParams::from_recon(&p), &frame, None)?;
        let score = map_error(&density_from_log(&h0, &support), &r2)?;
        stage2.push(ScoreRow { stage: 2, values: (l2, l3), score });
    }
    let best2 = argmin(&stage2).clone();
    table.extend(stage2);

    let fixed = ReconParams {
        lambda1: best1.values.0,
        lambda2: best2.values.0,
        lambda3: best2.values.1,
        ..base.clone()
    };
    let mut stage3 = Vec::new();
    for &(lambda, rho) in &grids.lambda_rho {
        let p = ReconParams { lambda, rho, ..fixed.clone() };
        let res = recon_joint_admm(training.data, training.coils, &p)?;
        let score = map_error(&res.x0, &res.r2star)?;
        stage3.push(ScoreRow { stage: 3, values: (lambda, rho), score });
    }
    let best3 = argmin(&stage3).clone();
    table.extend(stage3);

    Ok(TuneOutcome {
        params: ReconParams {
            lambda: best3.values.0,
            rho: best3.values.1,
            ..fixed
        },
        table,
        best: [best1.score, best2.score, best3.score],
    })
}
