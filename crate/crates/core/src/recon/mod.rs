//! End-to-end reconstruction pipelines.

mod decoupled;
mod joint;
mod model_based;
mod tune;

pub use decoupled::{recon_decoupled, recover_echo_images, EchoRecovery};
pub use joint::recon_joint_admm;
pub use model_based::{model_data_gradient, model_data_term, recon_model_based};
pub use tune::{tune_parameters, ScoreRow, TrainingSlice, TuneGrids, TuneOutcome};

use crate::error::{Error, Result};
use crate::image::{masked_relative_error, CoilSet, MultiEchoSet, RealImage};
use crate::kspace::KSpaceData;
use crate::params::{ReconParams, ReconResult};
use crate::subproblems::{AdmmState, DataTerm};
use crate::transforms::WaveletFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReconMethod {
    Decoupled,
    JointAdmm,
    ModelBased,
}

impl ReconMethod {
    pub const ALL: [ReconMethod; 3] = [ReconMethod::Decoupled, ReconMethod::JointAdmm, ReconMethod::ModelBased];

    pub fn name(self) -> &'static str {
        match self {
            ReconMethod::Decoupled => "decoupled",
            ReconMethod::JointAdmm => "joint",
            ReconMethod::ModelBased => "model",
        }
    }

    /// One-letter tag: D, J or M.
    pub fn tag(self) -> char {
        match self {
            ReconMethod::Decoupled => 'D',
            ReconMethod::JointAdmm => 'J',
            ReconMethod::ModelBased => 'M',
        }
    }

    pub fn run(self, data: &KSpaceData, coils: &CoilSet, params: &ReconParams) -> Result<ReconResult> {
        match self {
            ReconMethod::Decoupled => recon_decoupled(data, coils, params),
            ReconMethod::JointAdmm => recon_joint_admm(data, coils, params),
            ReconMethod::ModelBased => recon_model_based(data, coils, params),
        }
    }
}

impl std::fmt::Display for ReconMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ReconMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" | "decoupled" => Ok(ReconMethod::Decoupled),
            "j" | "joint" | "joint_admm" | "joint-admm" => Ok(ReconMethod::JointAdmm),
            "m" | "model" | "model_based" | "model-based" => Ok(ReconMethod::ModelBased),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Outcome of [`check_convergence_preconditions`]. Advisory only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreconditionReport {
    pub enough_echoes: bool,
    pub has_coils: bool,
    /// Per echo: does its pattern sample anything.
    pub nonempty_patterns: Vec<bool>,
}

impl PreconditionReport {
    pub fn passed(&self) -> bool {
        self.enough_echoes && self.has_coils && self.nonempty_patterns.iter().all(|&b| b)
    }
}

/// At least two echoes, at least one coil and a nonempty pattern per echo.
pub fn check_convergence_preconditions(data: &KSpaceData) -> PreconditionReport {
    PreconditionReport {
        enough_echoes: data.echoes() >= 2,
        has_coils: data.coils() >= 1,
        nonempty_patterns: data.patterns().patterns().iter().map(|p| p.count() > 0).collect(),
    }
}

/// Mean over echoes of the masked relative error of the magnitudes.
pub fn mean_echo_error(truth: &MultiEchoSet<f64>, estimate: &MultiEchoSet<f64>, mask: &RealImage) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::InvalidInput("echo counts differ".into()));
    }
    let mut total = 0.0;
    for (t, e) in truth.echoes().iter().zip(estimate.echoes()) {
        total += masked_relative_error(t, e, mask)?;
    }
    Ok(total / truth.len() as f64)
}

struct Setup<'a> {
    dt: DataTerm<'a>,
    frame: WaveletFrame,
}

fn prepare<'a>(data: &'a KSpaceData, coils: &CoilSet, params: &ReconParams) -> Result<Setup<'a>> {
    params.validate()?;
    if data.echoes() < 2 {
        return Err(Error::InvalidInput(format!(
            "reconstruction needs at least two echoes, got {}",
            data.echoes()
        )));
    }
    let dt = DataTerm::new(data, coils, params.power_iters)?;
    let (rows, cols) = data.dims();
    let frame = WaveletFrame::sparsity_averaging(rows, cols, params.wavelet_levels);
    Ok(Setup { dt, frame })
}

/// `sum_ij ||Y_ij - A_ij Z_i X_i||^2 + lambda1 sum_i ||Phi X_i||_1`.
fn echo_objective(state: &AdmmState, dt: &DataTerm<'_>, lambda1: f64, frame: &WaveletFrame) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..state.echoes() {
        total += dt.misfit(i, &state.echo_image(i))?;
        if lambda1 > 0.0 {
            total += lambda1 * l1_norm(&state.xi.echoes()[i], frame);
        }
    }
    Ok(total)
}

fn l1_norm(img: &RealImage, frame: &WaveletFrame) -> f64 {
    frame.penalty_of(img)
}

fn relative_change(prev: &MultiEchoSet<f64>, next: &MultiEchoSet<f64>) -> f64 {
    let (mut diff, mut base) = (0.0, 0.0);
    for (a, b) in prev.echoes().iter().zip(next.echoes()) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            diff += (x - y).powi(2);
            base += x * x;
        }
    }
    if base == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / base).sqrt()
    }
}

/// Pixels where at least one image exceeds `e_min`, as a 0/1 image.
fn fit_support(images: &MultiEchoSet<f64>, e_min: f64) -> RealImage {
    let (rows, cols) = images.dims();
    RealImage::from_fn(rows, cols, |r, c| {
        if images.echoes().iter().any(|img| img[(r, c)] > e_min) {
            1.0
        } else {
            0.0
        }
    })
}

/// `X0 = exp(H0)` on the support, zero elsewhere.
fn density_from_log(h0: &RealImage, support: &RealImage) -> RealImage {
    h0.zip_map(support, |&h, &s| if s > 0.0 { h.exp() } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::EchoTimes;
    use crate::sampling::{EchoPatternSet, PatternScheme, SamplingPattern};

    #[test]
    fn method_names_round_trip() {
        for m in ReconMethod::ALL {
            assert_eq!(m.name().parse::<ReconMethod>().unwrap(), m);
            assert_eq!(m.tag().to_string().parse::<ReconMethod>().unwrap(), m);
        }
        assert!("cg".parse::<ReconMethod>().is_err());
    }

    fn data_with(patterns: Vec<SamplingPattern>, times: EchoTimes) -> KSpaceData {
        let (rows, cols) = patterns[0].dims();
        let samples = patterns
            .iter()
            .map(|_| vec![crate::image::ComplexImage::zeros(rows, cols)])
            .collect();
        let set = EchoPatternSet::new(patterns, PatternScheme::Fixed).unwrap();
        KSpaceData::new(samples, set, times).unwrap()
    }

    #[test]
    fn preconditions() {
        let ok = data_with(vec![SamplingPattern::full(4, 4); 2], EchoTimes::new(vec![1.0, 2.0]).unwrap());
        assert!(check_convergence_preconditions(&ok).passed());

        let one = data_with(vec![SamplingPattern::full(4, 4)], EchoTimes::new_unchecked_count(vec![1.0]).unwrap());
        let rep = check_convergence_preconditions(&one);
        assert!(!rep.enough_echoes && !rep.passed());

        let empty = SamplingPattern::from_mask(4, 4, vec![false; 16]).unwrap();
        let gap = data_with(vec![SamplingPattern::full(4, 4), empty], EchoTimes::new(vec![1.0, 2.0]).unwrap());
        let rep = check_convergence_preconditions(&gap);
        assert_eq!(rep.nonempty_patterns, vec![true, false]);
        assert!(!rep.passed());
    }
}
