//! One-call synthetic acquisitions: phantom, normalized coils, per-echo
//! patterns and simulated k-space from a flat description.

use crate::error::{Error, Result};
use crate::image::{CoilSet, EchoTimes, MultiEchoSet, RealImage};
use crate::kspace::KSpaceData;
use crate::phantom::{decay_images, make_phantom, normalize_coils, simulate_kspace, synth_coils, AcquisitionSpec, Phantom, PhantomPreset};
use crate::sampling::{make_echo_patterns, EchoPatternSet, PatternScheme, PoissonDiskParams, SamplingPattern};

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub rows: usize,
    pub cols: usize,
    pub preset: PhantomPreset,
    pub phantom_seed: u64,
    pub coils: usize,
    pub echoes: usize,
    /// ms
    pub first_echo: f64,
    /// ms
    pub echo_spacing: f64,
    pub noise_sigma: f64,
    pub scheme: PatternScheme,
    /// Sampling rate in (0, 1]; 1 gives full sampling.
    pub rate: f64,
    pub d_min: f64,
    pub calib_radius: usize,
    pub pattern_seed: u64,
    pub noise_seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            preset: PhantomPreset::SheppLike,
            phantom_seed: 1,
            coils: 4,
            echoes: 4,
            first_echo: 7.64,
            echo_spacing: 5.41,
            noise_sigma: 0.005,
            scheme: PatternScheme::Fixed,
            rate: 0.3,
            d_min: 2.0,
            calib_radius: 3,
            pattern_seed: 7,
            noise_seed: 11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub phantom: Phantom,
    pub coils: CoilSet,
    pub data: KSpaceData,
    pub truth_xi: MultiEchoSet<f64>,
    /// Evaluation mask: the phantom support.
    pub mask: RealImage,
    /// Minimum distance the first pattern was generated with (after relaxation).
    pub d_min_used: f64,
}

pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    if !(spec.rate > 0.0 && spec.rate <= 1.0) {
        return Err(Error::InvalidInput(format!("sampling rate {} outside (0, 1]", spec.rate)));
    }
    let times = if spec.echoes == 1 {
        EchoTimes::new_unchecked_count(vec![spec.first_echo])?
    } else {
        EchoTimes::uniform(spec.echoes, spec.first_echo, spec.echo_spacing)?
    };
    let phantom = make_phantom(spec.rows, spec.cols, spec.preset, spec.phantom_seed);
    let coils = normalize_coils(&synth_coils(spec.rows, spec.cols, spec.coils)?);
    let patterns = if spec.rate >= 1.0 {
        EchoPatternSet::new(vec![SamplingPattern::full(spec.rows, spec.cols); spec.echoes], spec.scheme)?
    } else {
        make_echo_patterns(
            spec.echoes,
            spec.scheme,
            PoissonDiskParams {
                rows: spec.rows,
                cols: spec.cols,
                target_rate: spec.rate,
                d_min: spec.d_min,
                calib_radius: spec.calib_radius,
                seed: spec.pattern_seed,
            },
        )?
    };
    let d_min_used = if spec.rate >= 1.0 { 0.0 } else { patterns.patterns()[0].d_min() };
    let acq = AcquisitionSpec {
        times: times.clone(),
        coils: coils.clone(),
        patterns,
        noise_sigma: spec.noise_sigma,
    };
    let data = simulate_kspace(&phantom, &acq, spec.noise_seed)?;
    let truth_xi = decay_images(&phantom, &times);
    let mask = phantom.support.clone();
    Ok(Scenario {
        phantom,
        coils,
        data,
        truth_xi,
        mask,
        d_min_used,
    })
}
