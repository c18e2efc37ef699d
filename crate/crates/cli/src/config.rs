//! Experiment configuration, read from TOML.
//!
//! Every section is optional and falls back to the defaults below. Unknown
//! keys are rejected so that typos surface as configuration errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use t2star_core::phantom::PhantomPreset;
use t2star_core::recon::TuneGrids;
use t2star_core::sampling::PatternScheme;
use t2star_core::scenario::ScenarioSpec;
use t2star_core::{ReconMethod, ReconParams};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub phantom: PhantomSection,
    pub acquisition: AcquisitionSection,
    pub sampling: SamplingSection,
    pub recon: ReconSection,
    /// Overrides applied to every method.
    pub params: ParamOverrides,
    pub params_decoupled: ParamOverrides,
    pub params_joint: ParamOverrides,
    pub params_model: ParamOverrides,
    pub tune: TuneSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub preset: String,
    /// One synthetic slice per seed.
    pub seeds: Vec<u64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub coils: usize,
    pub echoes: usize,
    /// ms
    pub first_echo: f64,
    /// ms
    pub echo_spacing: f64,
    pub noise_sigma: f64,
    /// Added to the phantom seed of each slice.
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub scheme: String,
    pub rates: Vec<f64>,
    pub d_min: f64,
    pub calib_radius: usize,
    /// Added to the phantom seed of each slice.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub methods: Vec<String>,
}

/// Optional replacements for [`ReconParams`] fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub fista_iters: Option<usize>,
    pub fit_iters: Option<usize>,
    pub tol_primal: Option<f64>,
    pub tol_change: Option<f64>,
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
    pub r_max: Option<f64>,
    pub warm_start_iters: Option<usize>,
    pub wavelet_levels: Option<usize>,
    pub power_iters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub lambda1: Vec<f64>,
    /// `[lambda2, lambda3]` pairs.
    pub lambda23: Vec<[f64; 2]>,
    /// `[lambda, rho]` pairs.
    pub lambda_rho: Vec<[f64; 2]>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            phantom: PhantomSection::default(),
            acquisition: AcquisitionSection::default(),
            sampling: SamplingSection::default(),
            recon: ReconSection::default(),
            params: ParamOverrides::default(),
            params_decoupled: ParamOverrides::default(),
            params_joint: ParamOverrides::default(),
            params_model: ParamOverrides::default(),
            tune: TuneSection::default(),
        }
    }
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            preset: PhantomPreset::SheppLike.name().into(),
            seeds: vec![1],
            rows: 64,
            cols: 64,
        }
    }
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            coils: 4,
            echoes: 6,
            first_echo: 7.64,
            echo_spacing: 5.41,
            noise_sigma: 0.005,
            noise_seed: 200,
        }
    }
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            scheme: "fixed".into(),
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            d_min: 2.0,
            calib_radius: 3,
            seed: 100,
        }
    }
}

impl Default for ReconSection {
    fn default() -> Self {
        Self {
            methods: ReconMethod::ALL.iter().map(|m| m.name().to_string()).collect(),
        }
    }
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            lambda1: vec![1e-4, 1e-3, 1e-2],
            lambda23: vec![[0.0, 0.0], [1e-3, 1e-5], [1e-2, 1e-4]],
            lambda_rho: vec![[0.3, 0.3], [1.0, 1.0], [3.0, 3.0]],
        }
    }
}

impl ParamOverrides {
    pub fn apply(&self, base: &ReconParams) -> ReconParams {
        let mut p = base.clone();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        set!(
            lambda1, lambda2, lambda3, lambda, rho, outer_iters, inner_iters, fista_iters, fit_iters, tol_primal,
            tol_change, e_min, r_max, warm_start_iters, wavelet_levels, power_iters
        );
        if let Some(v) = self.e_max {
            p.e_max = Some(v);
        }
        p
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.preset()?;
        self.scheme()?;
        self.methods()?;
        if self.phantom.seeds.is_empty() {
            return bad("phantom.seeds is empty".into());
        }
        if self.phantom.rows < 4 || self.phantom.cols < 4 {
            return bad(format!("grid {}x{} is too small", self.phantom.rows, self.phantom.cols));
        }
        let a = &self.acquisition;
        if a.coils == 0 || a.echoes == 0 {
            return bad("coil and echo counts must be positive".into());
        }
        if !(a.first_echo >= 0.0 && a.echo_spacing > 0.0) {
            return bad("echo times must be nonnegative with positive spacing".into());
        }
        if !(a.noise_sigma >= 0.0) || !a.noise_sigma.is_finite() {
            return bad(format!("noise_sigma {} must be finite and nonnegative", a.noise_sigma));
        }
        if self.sampling.rates.is_empty() {
            return bad("sampling.rates is empty".into());
        }
        if let Some(r) = self.sampling.rates.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("sampling rate {r} outside (0, 1]"));
        }
        if !(self.sampling.d_min >= 0.0) || !self.sampling.d_min.is_finite() {
            return bad(format!("d_min {} must be finite and nonnegative", self.sampling.d_min));
        }
        for m in self.methods()? {
            self.params_for(m).validate().map_err(|e| CliError::Config(format!("{m}: {e}")))?;
        }
        Ok(())
    }

    pub fn preset(&self) -> CliResult<PhantomPreset> {
        self.phantom.preset.parse().map_err(config_err)
    }

    pub fn scheme(&self) -> CliResult<PatternScheme> {
        self.sampling.scheme.parse().map_err(config_err)
    }

    /// Requested methods in canonical order, without duplicates.
    pub fn methods(&self) -> CliResult<Vec<ReconMethod>> {
        if self.recon.methods.is_empty() {
            return Err(CliError::Config("recon.methods is empty".into()));
        }
        let mut out = self
            .recon
            .methods
            .iter()
            .map(|s| s.parse::<ReconMethod>().map_err(config_err))
            .collect::<CliResult<Vec<_>>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn params_for(&self, method: ReconMethod) -> ReconParams {
        let shared = self.params.apply(&ReconParams::default());
        match method {
            ReconMethod::Decoupled => self.params_decoupled.apply(&shared),
            ReconMethod::JointAdmm => self.params_joint.apply(&shared),
            ReconMethod::ModelBased => self.params_model.apply(&shared),
        }
    }

    pub fn tune_grids(&self) -> TuneGrids {
        TuneGrids {
            lambda1: self.tune.lambda1.clone(),
            lambda23: self.tune.lambda23.iter().map(|p| (p[0], p[1])).collect(),
            lambda_rho: self.tune.lambda_rho.iter().map(|p| (p[0], p[1])).collect(),
        }
    }

    /// Acquisition of one slice at one rate.
    pub fn scenario_spec(&self, phantom_seed: u64, rate: f64, scheme: PatternScheme) -> CliResult<ScenarioSpec> {
        Ok(ScenarioSpec {
            rows: self.phantom.rows,
            cols: self.phantom.cols,
            preset: self.preset()?,
            phantom_seed,
            coils: self.acquisition.coils,
            echoes: self.acquisition.echoes,
            first_echo: self.acquisition.first_echo,
            echo_spacing: self.acquisition.echo_spacing,
            noise_sigma: self.acquisition.noise_sigma,
            scheme,
            rate,
            d_min: self.sampling.d_min,
            calib_radius: self.sampling.calib_radius,
            pattern_seed: phantom_seed.wrapping_add(self.sampling.seed),
            noise_seed: phantom_seed.wrapping_add(self.acquisition.noise_seed),
        })
    }

    /// The configuration with the output directory reset to `.`, so that
    /// runs into different directories describe themselves identically.
    pub fn canonical_toml(&self) -> String {
        ExperimentConfig {
            output_dir: PathBuf::from("."),
            ..self.clone()
        }
        .to_toml()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_toml`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn config_err(e: t2star_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
