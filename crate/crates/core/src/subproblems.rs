//! Block updates of the ADMM scheme and the weighted log-linear fit.
//!
//! The echo images are split as `U_i = Z_i X_i` with `Z_i = exp(j Theta_i)`.
//! Every data-consistency step majorizes `f_j(U) = ||Y_ij - A_ij U||^2` at the
//! current iterate by `kappa_ij / 2 ||U - Q_ij||^2`, where
//! `Q_ij = U - (2 / kappa_ij) A_ij^* (A_ij U - Y_ij)` and `kappa_ij` bounds the
//! Lipschitz constant of the gradient.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{CoilSet, ComplexImage, EchoTimes, MultiEchoSet, RealImage};
use crate::kspace::KSpaceData;
use crate::params::ReconParams;
use crate::solvers::{fista_l1_warm, global_min_1d_e, power_iteration_norm, QuadL1Problem};
use crate::transforms::{build_operators, SamplingOperator, WaveletFrame};

/// Safety margin applied to power-iteration norm estimates.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;
/// Bisection tolerance (in `d = log E`) of the E update.
pub const E_BISECT_TOL: f64 = 1e-10;

/// Measurements together with their forward operators and Lipschitz weights.
#[derive(Clone, Debug)]
pub struct DataTerm<'a> {
    data: &'a KSpaceData,
    ops: Vec<Vec<SamplingOperator>>,
    kappas: Vec<Vec<f64>>,
}

/// How the Lipschitz weights `kappa_ij` are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KappaRule {
    /// `kappa_ij = 2 * 1.05 * ||A_ij^* A_ij||` for each coil separately.
    PerCoil,
    /// `kappa_ij = 2 * 1.05 * ||sum_j A_ij^* A_ij|| / J`: the joint bound
    /// shared equally, which still majorizes the summed data term and is
    /// much tighter when coil maps overlap.
    #[default]
    SharedBound,
}

impl<'a> DataTerm<'a> {
    /// Weights from [`KappaRule::SharedBound`], estimated by power iteration.
    pub fn new(data: &'a KSpaceData, coils: &CoilSet, power_iters: usize) -> Result<Self> {
        Self::with_rule(data, coils, power_iters, KappaRule::default())
    }

    pub fn with_rule(data: &'a KSpaceData, coils: &CoilSet, power_iters: usize, rule: KappaRule) -> Result<Self> {
        if coils.len() != data.coils() {
            return Err(Error::InvalidInput(format!(
                "{} coil maps for data with {} coils",
                coils.len(),
                data.coils()
            )));
        }
        if coils.dims() != data.dims() {
            return Err(Error::DimensionMismatch {
                expected: data.dims(),
                found: coils.dims(),
            });
        }
        let ops = build_operators(data.patterns().patterns(), coils)?;
        let (rows, cols) = data.dims();
        let scale = 2.0 * LIPSCHITZ_SAFETY;
        let kappas = ops
            .iter()
            .map(|per_coil| match rule {
                KappaRule::PerCoil => per_coil
                    .iter()
                    .map(|op| scale * operator_norm_sq(&[op.clone()], rows, cols, power_iters))
                    .collect(),
                KappaRule::SharedBound => {
                    let joint = scale * operator_norm_sq(per_coil, rows, cols, power_iters);
                    vec![joint / per_coil.len() as f64; per_coil.len()]
                }
            })
            .collect();
        Ok(Self { data, ops, kappas })
    }

    /// Use caller-supplied weights (each must be at least the true Lipschitz constant).
    pub fn with_kappas(data: &'a KSpaceData, coils: &CoilSet, kappas: Vec<Vec<f64>>) -> Result<Self> {
        let ops = build_operators(data.patterns().patterns(), coils)?;
        if kappas.len() != ops.len() || kappas.iter().zip(&ops).any(|(k, o)| k.len() != o.len()) {
            return Err(Error::InvalidInput("kappa table does not match echoes x coils".into()));
        }
        Ok(Self { data, ops, kappas })
    }

    pub fn data(&self) -> &KSpaceData {
        self.data
    }

    pub fn ops(&self) -> &[Vec<SamplingOperator>] {
        &self.ops
    }

    pub fn kappas(&self) -> &[Vec<f64>] {
        &self.kappas
    }

    pub fn times(&self) -> &EchoTimes {
        self.data.times()
    }

    pub fn echoes(&self) -> usize {
        self.ops.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }

    /// `A_ij^* (A_ij U - Y_ij)`.
    pub fn residual_image(&self, echo: usize, coil: usize, u: &ComplexImage) -> Result<ComplexImage> {
        let op = &self.ops[echo][coil];
        let y = &self.data.samples()[echo][coil];
        let r = op.forward(u)?.zip_map(y, |a, b| a - b);
        op.adjoint(&r)
    }

    /// `sum_j ||Y_ij - A_ij U||^2`.
    pub fn misfit(&self, echo: usize, u: &ComplexImage) -> Result<f64> {
        let mut total = 0.0;
        for (op, y) in self.ops[echo].iter().zip(&self.data.samples()[echo]) {
            let au = op.forward(u)?;
            total += au
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
        Ok(total)
    }

    /// Surrogate centers `Q_ij` for every coil of one echo.
    pub fn surrogate_centers(&self, echo: usize, u: &ComplexImage) -> Result<Vec<ComplexImage>> {
        (0..self.ops[echo].len())
            .map(|j| {
                let kappa = self.kappas[echo][j];
                if kappa <= 0.0 {
                    return Ok(u.clone());
                }
                let g = self.residual_image(echo, j, u)?;
                Ok(u.zip_map(&g, |a, b| a - b * (2.0 / kappa)))
            })
            .collect()
    }
}

/// `||sum_j A_j^* A_j||` over the given operators.
fn operator_norm_sq(ops: &[SamplingOperator], rows: usize, cols: usize, iters: usize) -> f64 {
    power_iteration_norm(
        |v| {
            let img = ComplexImage::from_vec(rows, cols, v.to_vec()).expect("length matches");
            let mut acc = ComplexImage::zeros(rows, cols);
            for op in ops {
                let n = op.normal(&img).expect("dims match");
                acc.as_mut_slice().iter_mut().zip(n.as_slice()).for_each(|(a, b)| *a += b);
            }
            acc.into_vec()
        },
        rows * cols,
        iters,
    )
}

/// ADMM variables. `e` and `b` are only meaningful for the joint pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub theta: MultiEchoSet<f64>,
    pub xi: MultiEchoSet<f64>,
    pub e: MultiEchoSet<f64>,
    pub b: MultiEchoSet<f64>,
    pub h0: RealImage,
    pub r2star: RealImage,
    pub iteration: usize,
}

impl AdmmState {
    /// All-zero images.
    pub fn zeros(rows: usize, cols: usize, times: &EchoTimes) -> Self {
        let set = || {
            MultiEchoSet::new(vec![RealImage::zeros(rows, cols); times.len()], times.clone()).expect("consistent")
        };
        Self {
            theta: set(),
            xi: set(),
            e: set(),
            b: set(),
            h0: RealImage::zeros(rows, cols),
            r2star: RealImage::zeros(rows, cols),
            iteration: 0,
        }
    }

    pub fn echoes(&self) -> usize {
        self.xi.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.xi.dims()
    }

    /// Complex echo image `Z_i X_i`.
    pub fn echo_image(&self, echo: usize) -> ComplexImage {
        compose(&self.xi.echoes()[echo], &self.theta.echoes()[echo])
    }

    /// Check shapes and the bound invariants on `xi` and `e`.
    pub fn validate(&self, e_min: f64, e_max: f64) -> Result<()> {
        let n = self.xi.len();
        let dims = self.xi.dims();
        for set in [&self.theta, &self.e, &self.b] {
            if set.len() != n {
                return Err(Error::InvalidInput("echo counts differ between state sets".into()));
            }
            if set.dims() != dims {
                return Err(Error::DimensionMismatch { expected: dims, found: set.dims() });
            }
        }
        if self.xi.echoes().iter().flat_map(|x| x.as_slice()).any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("negative magnitude".into()));
        }
        let tol = 1e-12 * e_max.max(1.0);
        if self
            .e
            .echoes()
            .iter()
            .flat_map(|x| x.as_slice())
            .any(|&v| v < e_min - tol || v > e_max + tol)
        {
            return Err(Error::InvalidInput("E outside [e_min, e_max]".into()));
        }
        Ok(())
    }
}

pub fn compose(magnitude: &RealImage, phase: &RealImage) -> ComplexImage {
    magnitude.zip_map(phase, |&m, &p| Complex64::from_polar(m, p))
}

/// `sum_j kappa_j Q_j`.
fn weighted_center(q: &[ComplexImage], kappas: &[f64]) -> ComplexImage {
    let (rows, cols) = q[0].dims();
    let mut acc = ComplexImage::zeros(rows, cols);
    for (qj, &k) in q.iter().zip(kappas) {
        for (a, v) in acc.as_mut_slice().iter_mut().zip(qj.as_slice()) {
            *a += v * k;
        }
    }
    acc
}

/// Closed-form phase: the angle of `sum_j kappa_j Q_j`, wrapped to [0, 2pi).
/// Where the weighted sum vanishes the previous phase is kept.
pub fn theta_from_centers(q: &[ComplexImage], kappas: &[f64], previous: &RealImage) -> RealImage {
    let s = weighted_center(q, kappas);
    s.zip_map(previous, |v, &p| {
        if v.norm_sqr() == 0.0 {
            p
        } else {
            v.arg().rem_euclid(TAU)
        }
    })
}

/// `sum_j kappa_j / 2 ||Z X - Q_j||^2`, the phase block of the surrogate.
pub fn surrogate_objective(q: &[ComplexImage], kappas: &[f64], xi: &RealImage, theta: &RealImage) -> f64 {
    let u = compose(xi, theta);
    q.iter()
        .zip(kappas)
        .map(|(qj, &k)| {
            0.5 * k
                * u.as_slice()
                    .iter()
                    .zip(qj.as_slice())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
        })
        .sum()
}

/// Phase update of every echo at the current state.
pub fn update_theta(state: &AdmmState, dt: &DataTerm<'_>) -> Result<MultiEchoSet<f64>> {
    let echoes = (0..state.echoes())
        .map(|i| {
            let q = dt.surrogate_centers(i, &state.echo_image(i))?;
            Ok(theta_from_centers(&q, &dt.kappas()[i], &state.theta.echoes()[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiEchoSet::new(echoes, state.theta.times().clone())
}

/// Inputs of one magnitude step. `coupling` carries `(B_i, E_i, rho)`; `None`
/// drops the augmented-Lagrangian terms (decoupled recovery).
pub struct XiStep<'s> {
    pub centers: &'s [ComplexImage],
    pub kappas: &'s [f64],
    pub theta: &'s RealImage,
    pub coupling: Option<(&'s RealImage, &'s RealImage, f64)>,
    pub lambda1: f64,
    pub frame: &'s WaveletFrame,
    pub fista_iters: usize,
}

impl XiStep<'_> {
    /// Center `V` and weight `rho + sum_j kappa_j` of the equivalent prox problem.
    pub fn prox_center(&self) -> (RealImage, f64) {
        let (rows, cols) = self.theta.dims();
        let mut num = RealImage::zeros(rows, cols);
        let mut weight: f64 = self.kappas.iter().sum();
        for (qj, &k) in self.centers.iter().zip(self.kappas) {
            for ((n, q), &th) in num.as_mut_slice().iter_mut().zip(qj.as_slice()).zip(self.theta.as_slice()) {
                // Re(conj(Z) Q)
                *n += k * (q.re * th.cos() + q.im * th.sin());
            }
        }
        if let Some((b, e, rho)) = self.coupling {
            weight += rho;
            for ((n, &bv), &ev) in num.as_mut_slice().iter_mut().zip(b.as_slice()).zip(e.as_slice()) {
                *n += rho * ev - bv;
            }
        }
        if weight > 0.0 {
            num.as_mut_slice().iter_mut().for_each(|v| *v /= weight);
        }
        (num, weight)
    }

    /// Block objective in `X` for fixed phase:
    /// surrogate + lambda1 ||Phi X||_1 + <B, X - E> + rho/2 ||X - E||^2.
    pub fn objective(&self, xi: &RealImage) -> f64 {
        let mut total = surrogate_objective(self.centers, self.kappas, xi, self.theta);
        if self.lambda1 > 0.0 {
            total += self.lambda1 * self.frame.penalty_of(xi);
        }
        if let Some((b, e, rho)) = self.coupling {
            for ((&x, &bv), &ev) in xi.as_slice().iter().zip(b.as_slice()).zip(e.as_slice()) {
                total += bv * (x - ev) + 0.5 * rho * (x - ev) * (x - ev);
            }
        }
        total
    }

    /// Solve the prox problem and clamp to nonnegative magnitudes. Returns the
    /// magnitude and the dual iterate for warm starts. Keeps `previous` when
    /// there is no information at all (no coil weight, no coupling).
    pub fn solve(&self, previous: &RealImage, warm: Option<Vec<f64>>) -> (RealImage, Vec<f64>) {
        let (v, weight) = self.prox_center();
        if weight <= 0.0 {
            return (previous.clone(), warm.unwrap_or_default());
        }
        let problem = QuadL1Problem {
            center: &v,
            tau: self.lambda1 / weight,
            frame: self.frame,
            iters: self.fista_iters,
            tol: 1e-12,
        };
        let (x, dual) = fista_l1_warm(&problem, warm);
        (x.map(|&a| a.max(0.0)), dual)
    }
}

/// Magnitude update of every echo, with `Q` formed at the current state and
/// the phase taken from `state.theta`.
pub fn update_xi(
    state: &AdmmState,
    dt: &DataTerm<'_>,
    params: &ReconParams,
    frame: &WaveletFrame,
) -> Result<MultiEchoSet<f64>> {
    let echoes = (0..state.echoes())
        .map(|i| {
            let q = dt.surrogate_centers(i, &state.echo_image(i))?;
            let step = XiStep {
                centers: &q,
                kappas: &dt.kappas()[i],
                theta: &state.theta.echoes()[i],
                coupling: Some((&state.b.echoes()[i], &state.e.echoes()[i], params.rho)),
                lambda1: params.lambda1,
                frame,
                fista_iters: params.fista_iters,
            };
            Ok(step.solve(&state.xi.echoes()[i], None).0)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiEchoSet::new(echoes, state.xi.times().clone())
}

/// One proximal pass over (phase, magnitude) for every echo: `Q` is formed
/// once at the current iterate, then the phase and the magnitude are updated
/// in turn. `coupled` switches the augmented-Lagrangian terms on. `duals`
/// carries per-echo warm starts of the l1 prox.
pub fn zx_step(
    state: &mut AdmmState,
    dt: &DataTerm<'_>,
    params: &ReconParams,
    frame: &WaveletFrame,
    coupled: bool,
    duals: &mut [Option<Vec<f64>>],
) -> Result<()> {
    let n = state.echoes();
    let results: Vec<Result<(RealImage, RealImage, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = dt.surrogate_centers(i, &state.echo_image(i))?;
            let kappas = &dt.kappas()[i];
            let theta = theta_from_centers(&q, kappas, &state.theta.echoes()[i]);
            let step = XiStep {
                centers: &q,
                kappas,
                theta: &theta,
                coupling: coupled.then(|| (&state.b.echoes()[i], &state.e.echoes()[i], params.rho)),
                lambda1: params.lambda1,
                frame,
                fista_iters: params.fista_iters,
            };
            let (x, dual) = step.solve(&state.xi.echoes()[i], duals[i].clone());
            Ok((theta, x, dual))
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        let (theta, x, dual) = r?;
        state.theta.echoes_mut()[i] = theta;
        state.xi.echoes_mut()[i] = x;
        duals[i] = Some(dual);
    }
    Ok(())
}

/// Settings of the weighted log-linear fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitParams {
    pub lambda2: f64,
    pub lambda3: f64,
    /// Alternating (H0, R2*) passes.
    pub iters: usize,
    pub fista_iters: usize,
    /// Relative change of (H0, R2*) below which the passes stop early.
    pub tol: f64,
    pub e_min: f64,
    pub r_max: f64,
}

impl FitParams {
    pub fn from_recon(p: &ReconParams) -> Self {
        Self {
            lambda2: p.lambda2,
            lambda3: p.lambda3,
            iters: p.fit_iters,
            fista_iters: p.fista_iters,
            tol: 1e-10,
            e_min: p.e_min,
            r_max: p.r_max,
        }
    }
}

/// Per-echo weights `v^2` (zero where `v <= e_min`) and log targets.
fn fit_weights(images: &MultiEchoSet<f64>, e_min: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    images
        .echoes()
        .iter()
        .map(|img| {
            img.as_slice()
                .iter()
                .map(|&v| if v > e_min { (v * v, v.ln()) } else { (0.0, 0.0) })
                .unzip()
        })
        .unzip()
}

/// `sum_i sum_p w_i (H0 - t_i R2* - log v_i)^2 + lambda2 ||Phi H0||_1 + lambda3 ||Phi R2*||_1`
/// with the weights of [`weighted_log_fit`].
pub fn log_fit_objective(
    images: &MultiEchoSet<f64>,
    h0: &RealImage,
    r2star: &RealImage,
    params: &FitParams,
    frame: &WaveletFrame,
) -> f64 {
    let (w, l) = fit_weights(images, params.e_min);
    let times = images.times().as_slice();
    let mut total = 0.0;
    for ((wi, li), &t) in w.iter().zip(&l).zip(times) {
        for (p, (&wv, &lv)) in wi.iter().zip(li).enumerate() {
            let r = h0.as_slice()[p] - t * r2star.as_slice()[p] - lv;
            total += wv * r * r;
        }
    }
    let l1 = |img: &RealImage| frame.penalty_of(img);
    if params.lambda2 > 0.0 {
        total += params.lambda2 * l1(h0);
    }
    if params.lambda3 > 0.0 {
        total += params.lambda3 * l1(r2star);
    }
    total
}

/// Weighted log-domain loss of one pixel, `sum_i v_i^2 (log v_i - h0 + t_i r2)^2`.
pub fn pixel_log_loss(values: &[f64], times: &[f64], h0: f64, r2: f64) -> f64 {
    values
        .iter()
        .zip(times)
        .map(|(&v, &t)| v * v * (v.ln() - h0 + t * r2).powi(2))
        .sum()
}

/// Nonlinear decay loss of one pixel, `sum_i (x0 exp(-t_i r2) - v_i)^2`.
/// Agrees with [`pixel_log_loss`] at `h0 = log x0` to first order in the
/// relative residuals.
pub fn pixel_decay_loss(values: &[f64], times: &[f64], x0: f64, r2: f64) -> f64 {
    values
        .iter()
        .zip(times)
        .map(|(&v, &t)| (x0 * (-t * r2).exp() - v).powi(2))
        .sum()
}

/// Exact per-pixel weighted least squares of the log-linear model, with R2*
/// clamped to [0, r_max] (H0 re-fitted after clamping). Returns per-pixel
/// `(h0, r2, has_data)`.
fn closed_form_fit(w: &[Vec<f64>], l: &[Vec<f64>], times: &[f64], r_max: f64) -> Vec<(f64, f64, bool)> {
    let n = w[0].len();
    (0..n)
        .map(|p| {
            let (mut sw, mut swt, mut swtt, mut swl, mut swtl) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let mut active = 0;
            for i in 0..times.len() {
                let (wv, lv, t) = (w[i][p], l[i][p], times[i]);
                if wv > 0.0 {
                    active += 1;
                }
                sw += wv;
                swt += wv * t;
                swtt += wv * t * t;
                swl += wv * lv;
                swtl += wv * t * lv;
            }
            if active == 0 {
                return (0.0, 0.0, false);
            }
            // [sw, -swt; -swt, swtt] [h; r] = [swl; -swtl]
            let det = sw * swtt - swt * swt;
            let r = if active >= 2 && det > 1e-300 { (swt * swl - sw * swtl) / det } else { 0.0 };
            let r_c = r.clamp(0.0, r_max);
            let h = (swl + swt * r_c) / sw;
            (h, r_c, true)
        })
        .collect()
}

/// Fit `log v_i ~ H0 - t_i R2*` with weights `v_i^2`. `images` are either the
/// recovered magnitudes (decoupled) or the split variables E (joint). With
/// zero regularization the per-pixel normal equations are solved exactly;
/// otherwise alternating proximal l1 steps on H0 and R2* follow, started from
/// `init` or from the unregularized solution. Pixels without usable data are
/// set to zero in both outputs.
pub fn weighted_log_fit(
    images: &MultiEchoSet<f64>,
    params: &FitParams,
    frame: &WaveletFrame,
    init: Option<(&RealImage, &RealImage)>,
) -> Result<(RealImage, RealImage)> {
    if images.len() < 2 {
        return Err(Error::InvalidInput(format!("log fit needs at least two echoes, got {}", images.len())));
    }
    let (rows, cols) = images.dims();
    let times = images.times().as_slice();
    let (w, l) = fit_weights(images, params.e_min);
    let exact = closed_form_fit(&w, &l, times, params.r_max);
    let active: Vec<bool> = exact.iter().map(|e| e.2).collect();

    let (mut h, mut r) = match init {
        Some((h0, r2)) if h0.dims() == (rows, cols) && r2.dims() == (rows, cols) => (h0.clone(), r2.clone()),
        _ => (
            RealImage::from_vec(rows, cols, exact.iter().map(|e| e.0).collect())?,
            RealImage::from_vec(rows, cols, exact.iter().map(|e| e.1).collect())?,
        ),
    };

    if params.lambda2 > 0.0 || params.lambda3 > 0.0 {
        // block Lipschitz constants: the Hessians in H0 and in R2* are diagonal
        let (mut sum_gamma, mut sum_nu) = (0.0f64, 0.0f64);
        for p in 0..rows * cols {
            let (g, n) = (0..times.len()).fold((0.0, 0.0), |(g, n), i| {
                (g + 2.0 * w[i][p], n + 2.0 * times[i] * times[i] * w[i][p])
            });
            sum_gamma = sum_gamma.max(g);
            sum_nu = sum_nu.max(n);
        }
        let mut h_dual = None;
        let mut r_dual = None;
        for _ in 0..params.iters {
            let (h_prev, r_prev) = (h.clone(), r.clone());
            if sum_gamma > 0.0 {
                // center = H0 - grad / L
                let center = RealImage::from_fn(rows, cols, |y, x| {
                    let p = y * cols + x;
                    let g: f64 = (0..times.len())
                        .map(|i| 2.0 * w[i][p] * (h.as_slice()[p] - times[i] * r.as_slice()[p] - l[i][p]))
                        .sum();
                    h.as_slice()[p] - g / sum_gamma
                });
                let (next, dual) = fista_l1_warm(
                    &QuadL1Problem {
                        center: &center,
                        tau: params.lambda2 / sum_gamma,
                        frame,
                        iters: params.fista_iters,
                        tol: 1e-12,
                    },
                    h_dual.take(),
                );
                h = next;
                h_dual = Some(dual);
            }
            if sum_nu > 0.0 {
                let center = RealImage::from_fn(rows, cols, |y, x| {
                    let p = y * cols + x;
                    let g: f64 = (0..times.len())
                        .map(|i| {
                            -2.0 * times[i] * w[i][p] * (h.as_slice()[p] - times[i] * r.as_slice()[p] - l[i][p])
                        })
                        .sum();
                    r.as_slice()[p] - g / sum_nu
                });
                let (next, dual) = fista_l1_warm(
                    &QuadL1Problem {
                        center: &center,
                        tau: params.lambda3 / sum_nu,
                        frame,
                        iters: params.fista_iters,
                        tol: 1e-12,
                    },
                    r_dual.take(),
                );
                r = next.map(|&v| v.clamp(0.0, params.r_max));
                r_dual = Some(dual);
            }
            let change = (sq_dist(&h, &h_prev) + sq_dist(&r, &r_prev)).sqrt();
            let scale = (h.norm().powi(2) + r.norm().powi(2)).sqrt().max(1e-12);
            if change <= params.tol * scale {
                break;
            }
        }
    }

    for (p, &a) in active.iter().enumerate() {
        if !a {
            h.as_mut_slice()[p] = 0.0;
            r.as_mut_slice()[p] = 0.0;
        }
    }
    Ok((h, r))
}

fn sq_dist(a: &RealImage, b: &RealImage) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Bounds and weights of the E update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EStep {
    pub rho: f64,
    pub lambda: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl EStep {
    /// Sum over echoes and pixels of the pixel objective at `e`.
    pub fn objective(&self, state: &AdmmState, e: &MultiEchoSet<f64>) -> f64 {
        let times = state.xi.times().as_slice();
        let mut total = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let (x, b, ev) = (&state.xi.echoes()[i], &state.b.echoes()[i], &e.echoes()[i]);
            for p in 0..x.len() {
                let w = state.h0.as_slice()[p] - t * state.r2star.as_slice()[p];
                let obj = crate::solvers::EObjective {
                    x: x.as_slice()[p],
                    w,
                    b: b.as_slice()[p],
                    rho: self.rho,
                    lambda: self.lambda,
                };
                total += obj.value(ev.as_slice()[p].ln());
            }
        }
        total
    }
}

/// Pixel-wise global minimization over `E_i` in `[e_min, e_max]` with
/// `w_i = H0 - t_i R2*`.
pub fn update_e(state: &AdmmState, step: &EStep) -> Result<MultiEchoSet<f64>> {
    if !(step.e_min > 0.0 && step.e_max > step.e_min) {
        return Err(Error::InvalidInput("need 0 < e_min < e_max".into()));
    }
    let (d_lo, d_hi) = (step.e_min.ln(), step.e_max.ln());
    let (rows, cols) = state.dims();
    let times = state.xi.times().as_slice();
    let echoes = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let x = state.xi.echoes()[i].as_slice();
            let b = state.b.echoes()[i].as_slice();
            let data: Vec<f64> = (0..rows * cols)
                .into_par_iter()
                .map(|p| {
                    let w = state.h0.as_slice()[p] - t * state.r2star.as_slice()[p];
                    let (d, _) = global_min_1d_e(x[p], w, b[p], step.rho, step.lambda, d_lo, d_hi, E_BISECT_TOL);
                    d.exp().clamp(step.e_min, step.e_max)
                })
                .collect();
            RealImage::from_vec(rows, cols, data)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiEchoSet::new(echoes, state.e.times().clone())
}

/// `B_i + rho (X_i - E_i)`.
pub fn update_dual(state: &AdmmState, rho: f64) -> MultiEchoSet<f64> {
    let echoes = (0..state.echoes())
        .map(|i| {
            let diff = state.xi.echoes()[i].zip_map(&state.e.echoes()[i], |x, e| x - e);
            state.b.echoes()[i].zip_map(&diff, |b, d| b + rho * d)
        })
        .collect();
    MultiEchoSet::new(echoes, state.b.times().clone()).expect("consistent")
}

/// `sum_i ||X_i - E_i||_2`.
pub fn primal_residual(state: &AdmmState) -> f64 {
    state
        .xi
        .echoes()
        .iter()
        .zip(state.e.echoes())
        .map(|(x, e)| sq_dist(x, e).sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{EchoPatternSet, PatternScheme, SamplingPattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn times2() -> EchoTimes {
        EchoTimes::new(vec![1.0, 2.0]).unwrap()
    }

    fn set(vals: Vec<RealImage>, times: &EchoTimes) -> MultiEchoSet<f64> {
        MultiEchoSet::new(vals, times.clone()).unwrap()
    }

    #[test]
    fn theta_of_one_plus_j() {
        let q = vec![ComplexImage::filled(1, 1, Complex64::new(1.0, 1.0))];
        let th = theta_from_centers(&q, &[1.0], &RealImage::zeros(1, 1));
        assert!((th[(0, 0)] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);

        let q = vec![ComplexImage::filled(2, 2, Complex64::new(3.0, 0.0))];
        let th = theta_from_centers(&q, &[2.0], &RealImage::filled(2, 2, 1.0));
        assert!(th.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn theta_kept_where_weighted_sum_vanishes() {
        let q = vec![
            ComplexImage::filled(1, 1, Complex64::new(1.0, 0.0)),
            ComplexImage::filled(1, 1, Complex64::new(-1.0, 0.0)),
        ];
        let th = theta_from_centers(&q, &[2.0, 2.0], &RealImage::filled(1, 1, 0.7));
        assert_eq!(th[(0, 0)], 0.7);
    }

    #[test]
    fn theta_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let coils = rng.gen_range(1..5);
            let q: Vec<ComplexImage> = (0..coils)
                .map(|_| ComplexImage::filled(1, 1, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                .collect();
            let k: Vec<f64> = (0..coils).map(|_| rng.gen_range(0.1..3.0)).collect();
            let x = RealImage::filled(1, 1, rng.gen_range(0.1..2.0));
            let th = theta_from_centers(&q, &k, &RealImage::zeros(1, 1));
            let best = surrogate_objective(&q, &k, &x, &th);
            let grid = (0..4096)
                .map(|g| surrogate_objective(&q, &k, &x, &RealImage::filled(1, 1, TAU * g as f64 / 4096.0)))
                .fold(f64::INFINITY, f64::min);
            assert!(best <= grid + 1e-8);
        }
    }

    #[test]
    fn two_point_log_fit() {
        let t = times2();
        let imgs = set(vec![RealImage::filled(1, 1, 2.0), RealImage::filled(1, 1, 1.0)], &t);
        let frame = WaveletFrame::sparsity_averaging(1, 1, 0);
        let p = FitParams::from_recon(&ReconParams::unregularized());
        let (h, r) = weighted_log_fit(&imgs, &p, &frame, None).unwrap();
        assert!((r[(0, 0)] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((h[(0, 0)] - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_has_zero_rate() {
        let t = EchoTimes::uniform(4, 5.0, 3.0).unwrap();
        let imgs = set(vec![RealImage::filled(2, 2, 0.6); 4], &t);
        let frame = WaveletFrame::sparsity_averaging(2, 2, 1);
        let p = FitParams::from_recon(&ReconParams::unregularized());
        let (h, r) = weighted_log_fit(&imgs, &p, &frame, None).unwrap();
        assert!(r.max_abs() < 1e-12);
        assert!(h.as_slice().iter().all(|v| (v - 0.6f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn empty_pixels_are_excluded() {
        let t = times2();
        let mut a = RealImage::filled(1, 2, 1.0);
        a[(0, 1)] = 0.0;
        let imgs = set(vec![a.clone(), a], &t);
        let frame = WaveletFrame::sparsity_averaging(1, 2, 0);
        let p = FitParams {
            lambda2: 0.1,
            lambda3: 0.01,
            ..FitParams::from_recon(&ReconParams::default())
        };
        let (h, r) = weighted_log_fit(&imgs, &p, &frame, None).unwrap();
        assert_eq!((h[(0, 1)], r[(0, 1)]), (0.0, 0.0));
        assert!(weighted_log_fit(&imgs.truncated(2).unwrap(), &p, &frame, None).is_ok());
    }

    #[test]
    fn fit_needs_two_echoes() {
        let t = EchoTimes::new_unchecked_count(vec![1.0]).unwrap();
        let imgs = MultiEchoSet::new(vec![RealImage::filled(1, 1, 1.0)], t).unwrap();
        let frame = WaveletFrame::sparsity_averaging(1, 1, 0);
        let p = FitParams::from_recon(&ReconParams::unregularized());
        assert!(weighted_log_fit(&imgs, &p, &frame, None).is_err());
    }

    #[test]
    fn regularized_fit_does_not_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = EchoTimes::uniform(4, 4.0, 6.0).unwrap();
        let imgs = set(
            (0..4).map(|_| RealImage::from_fn(8, 8, |_, _| rng.gen_range(0.05..1.0))).collect(),
            &t,
        );
        let frame = WaveletFrame::sparsity_averaging(8, 8, 2);
        let p = FitParams {
            lambda2: 0.05,
            lambda3: 0.5,
            iters: 30,
            ..FitParams::from_recon(&ReconParams::default())
        };
        let p0 = FitParams { iters: 0, ..p };
        let (h0, r0) = weighted_log_fit(&imgs, &p0, &frame, None).unwrap();
        let (h, r) = weighted_log_fit(&imgs, &p, &frame, None).unwrap();
        assert!(log_fit_objective(&imgs, &h, &r, &p, &frame) <= log_fit_objective(&imgs, &h0, &r0, &p, &frame) + 1e-12);
    }

    fn random_state(rng: &mut impl Rng, rows: usize, cols: usize, times: &EchoTimes) -> AdmmState {
        let mut s = AdmmState::zeros(rows, cols, times);
        let n = times.len();
        let mut img = |lo: f64, hi: f64| RealImage::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi));
        let xi: Vec<_> = (0..n).map(|_| img(0.01, 2.0)).collect();
        let e: Vec<_> = (0..n).map(|_| img(0.01, 2.0)).collect();
        let b: Vec<_> = (0..n).map(|_| img(-1.0, 1.0)).collect();
        let th: Vec<_> = (0..n).map(|_| img(0.0, TAU)).collect();
        s.h0 = img(-1.0, 0.5);
        s.r2star = img(0.0, 0.1);
        s.xi = set(xi, times);
        s.e = set(e, times);
        s.b = set(b, times);
        s.theta = set(th, times);
        s
    }

    #[test]
    fn e_update_limiting_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = times2();
        let mut s = random_state(&mut rng, 4, 4, &t);
        s.b = set(vec![RealImage::zeros(4, 4); 2], &t);
        let e = update_e(&s, &EStep { rho: 1.0, lambda: 0.0, e_min: 0.05, e_max: 1.5 }).unwrap();
        for (ei, xi) in e.echoes().iter().zip(s.xi.echoes()) {
            for (a, b) in ei.as_slice().iter().zip(xi.as_slice()) {
                assert!((a - b.clamp(0.05, 1.5)).abs() < 1e-8);
            }
        }
        let e = update_e(&s, &EStep { rho: 0.0, lambda: 1.0, e_min: 1e-3, e_max: 10.0 }).unwrap();
        for (i, ei) in e.echoes().iter().enumerate() {
            for p in 0..16 {
                let w = s.h0.as_slice()[p] - t.as_slice()[i] * s.r2star.as_slice()[p];
                assert!((ei.as_slice()[p] - w.exp()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn e_update_dominates_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let t = EchoTimes::uniform(3, 2.0, 3.0).unwrap();
        let s = random_state(&mut rng, 6, 6, &t);
        let step = EStep { rho: 1.3, lambda: 0.7, e_min: 1e-3, e_max: 5.0 };
        let e = update_e(&s, &step).unwrap();
        let at_x = s.xi.clone();
        let at_w = set(
            t.as_slice()
                .iter()
                .map(|&ti| s.h0.zip_map(&s.r2star, |h, r| (h - ti * r).exp()))
                .collect(),
            &t,
        );
        let v = step.objective(&s, &e);
        assert!(v <= step.objective(&s, &at_x) + 1e-9);
        assert!(v <= step.objective(&s, &at_w) + 1e-9);
    }

    #[test]
    fn dual_update_hand_values() {
        let t = times2();
        let mut s = AdmmState::zeros(1, 1, &t);
        s.xi = set(vec![RealImage::filled(1, 1, 3.0); 2], &t);
        s.e = set(vec![RealImage::filled(1, 1, 2.0); 2], &t);
        let b = update_dual(&s, 2.0);
        assert!(b.echoes().iter().all(|e| e[(0, 0)] == 2.0));
        assert_eq!(update_dual(&s, 0.0), s.b);
        s.e = s.xi.clone();
        s.b = set(vec![RealImage::filled(1, 1, 0.3); 2], &t);
        assert_eq!(update_dual(&s, 5.0), s.b);
    }

    fn full_single_coil_data(truth: &[ComplexImage], t: &EchoTimes) -> (KSpaceData, CoilSet) {
        let (rows, cols) = truth[0].dims();
        let coils = CoilSet::unit(rows, cols);
        let pats = EchoPatternSet::new(vec![SamplingPattern::full(rows, cols); t.len()], PatternScheme::Fixed).unwrap();
        let ops = build_operators(pats.patterns(), &coils).unwrap();
        let samples = truth.iter().zip(&ops).map(|(u, o)| vec![o[0].forward(u).unwrap()]).collect();
        (KSpaceData::new(samples, pats, t.clone()).unwrap(), coils)
    }

    #[test]
    fn unit_isometry_kappa() {
        let t = times2();
        let u = vec![ComplexImage::zeros(8, 8); 2];
        let (data, coils) = full_single_coil_data(&u, &t);
        let dt = DataTerm::new(&data, &coils, 50).unwrap();
        for k in dt.kappas().iter().flatten() {
            assert!((k - 2.0 * LIPSCHITZ_SAFETY).abs() < 1e-9);
        }
    }

    #[test]
    fn shared_bound_is_tighter_than_per_coil() {
        let t = times2();
        let coils = crate::phantom::normalize_coils(&crate::phantom::synth_coils(16, 16, 4).unwrap());
        let pats = EchoPatternSet::new(vec![SamplingPattern::full(16, 16); 2], PatternScheme::Fixed).unwrap();
        let samples = vec![vec![ComplexImage::zeros(16, 16); 4]; 2];
        let data = KSpaceData::new(samples, pats, t).unwrap();
        let shared = DataTerm::new(&data, &coils, 50).unwrap();
        let per = DataTerm::with_rule(&data, &coils, 50, KappaRule::PerCoil).unwrap();
        let sum = |d: &DataTerm<'_>| d.kappas()[0].iter().sum::<f64>();
        // normalized coils: sum_j |S_j|^2 = 1, so the joint bound is 2 * 1.05
        assert!((sum(&shared) - 2.0 * LIPSCHITZ_SAFETY).abs() < 1e-6);
        assert!(sum(&per) > sum(&shared));
    }

    #[test]
    fn unregularized_full_sampling_recovers_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = times2();
        let (rows, cols) = (8, 8);
        let mags: Vec<RealImage> = (0..2).map(|_| RealImage::from_fn(rows, cols, |_, _| rng.gen_range(0.1..1.0))).collect();
        let phases: Vec<RealImage> = (0..2).map(|_| RealImage::from_fn(rows, cols, |_, _| rng.gen_range(0.0..TAU))).collect();
        let truth: Vec<ComplexImage> = mags.iter().zip(&phases).map(|(m, p)| compose(m, p)).collect();
        let (data, coils) = full_single_coil_data(&truth, &t);
        let dt = DataTerm::new(&data, &coils, 50).unwrap();
        let frame = WaveletFrame::sparsity_averaging(rows, cols, 2);
        let mut s = AdmmState::zeros(rows, cols, &t);
        s.theta = set(phases, &t);
        let params = ReconParams { rho: 0.0, ..ReconParams::unregularized() };
        for _ in 0..15 {
            s.xi = update_xi(&s, &dt, &params, &frame).unwrap();
        }
        for (x, m) in s.xi.echoes().iter().zip(&mags) {
            assert!(crate::image::image_linf_diff(x, m).unwrap() < 1e-8);
        }
    }

    #[test]
    fn large_rho_pins_magnitude_to_e() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = times2();
        let truth = vec![ComplexImage::from_fn(8, 8, |_, _| Complex64::new(rng.gen_range(0.0..1.0), 0.0)); 2];
        let (data, coils) = full_single_coil_data(&truth, &t);
        let dt = DataTerm::new(&data, &coils, 30).unwrap();
        let frame = WaveletFrame::sparsity_averaging(8, 8, 2);
        let mut s = random_state(&mut rng, 8, 8, &t);
        s.b = set(vec![RealImage::zeros(8, 8); 2], &t);
        let params = ReconParams { rho: 1e9, lambda1: 1e-3, ..Default::default() };
        let xi = update_xi(&s, &dt, &params, &frame).unwrap();
        for (x, e) in xi.echoes().iter().zip(s.e.echoes()) {
            assert!(crate::image::image_linf_diff(x, e).unwrap() < 1e-6);
        }
    }

    #[test]
    fn block_updates_do_not_increase_objectives() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = times2();
        let (rows, cols) = (8, 8);
        let truth: Vec<ComplexImage> = (0..2)
            .map(|_| ComplexImage::from_fn(rows, cols, |_, _| Complex64::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.0..TAU))))
            .collect();
        let (data, coils) = full_single_coil_data(&truth, &t);
        let dt = DataTerm::new(&data, &coils, 30).unwrap();
        let frame = WaveletFrame::sparsity_averaging(rows, cols, 2);
        let s = random_state(&mut rng, rows, cols, &t);
        for i in 0..2 {
            let q = dt.surrogate_centers(i, &s.echo_image(i)).unwrap();
            let k = &dt.kappas()[i];
            let th = theta_from_centers(&q, k, &s.theta.echoes()[i]);
            let x = &s.xi.echoes()[i];
            assert!(surrogate_objective(&q, k, x, &th) <= surrogate_objective(&q, k, x, &s.theta.echoes()[i]) + 1e-12);
            let step = XiStep {
                centers: &q,
                kappas: k,
                theta: &th,
                coupling: Some((&s.b.echoes()[i], &s.e.echoes()[i], 0.5)),
                lambda1: 0.01,
                frame: &frame,
                fista_iters: 20,
            };
            let (xn, _) = step.solve(x, None);
            assert!(step.objective(&xn) <= step.objective(x) + 1e-12);
        }
    }
}
