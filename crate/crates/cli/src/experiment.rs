//! Sweeps, scheme comparisons, tuning and single-shot simulate/recon/export.
//!
//! Output layout of a sweep:
//!
//! ```text
//! <out>/config.toml     resolved configuration (output directory as `.`)
//! <out>/metrics.csv     one row per (slice, rate, method), deterministic
//! <out>/timings.csv     wall-clock times of the same jobs
//! <out>/maps/*.t2smaps  recovered R2* and X0
//! <out>/maps/*.pgm      8-bit renderings of the maps
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use t2star_core::image::{masked_relative_error, CoilSet, RealImage};
use t2star_core::io::{self, MapStack};
use t2star_core::phantom::{normalize_coils, synth_coils, R2STAR_MAX};
use t2star_core::recon::{tune_parameters, TrainingSlice, TuneOutcome};
use t2star_core::sampling::PatternScheme;
use t2star_core::scenario::{build_scenario, Scenario};
use t2star_core::{KSpaceData, ReconMethod, ReconResult};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const METRICS_HEADER: &str = "slice,scheme,rate,method,r2star_error,x0_error,iterations,converged,config_hash";
pub const TIMINGS_HEADER: &str = "slice,scheme,rate,method,total_ms,ms_per_iteration";
pub const SCHEMES_HEADER: &str = "slice,rate,fixed_error,complementary_error,config_hash";

/// Display window of R2* maps in 1/ms.
pub const R2STAR_WINDOW: (f64, f64) = (0.0, 1.25 * R2STAR_MAX);

#[derive(Clone, Debug, PartialEq)]
pub struct JobRow {
    pub slice: u64,
    pub scheme: PatternScheme,
    pub rate: f64,
    pub method: ReconMethod,
    pub r2star_error: f64,
    pub x0_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub rows: Vec<JobRow>,
    pub output_dir: PathBuf,
    pub config_hash: String,
}

impl ExperimentSummary {
    /// Exit status 3 applies when not a single job converged.
    pub fn check_convergence(&self) -> CliResult<()> {
        if !self.rows.is_empty() && self.rows.iter().all(|r| !r.converged) {
            return Err(CliError::NoConvergence(self.rows.len()));
        }
        Ok(())
    }
}

fn rate_key(rate: f64) -> String {
    format!("{rate:.3}")
}

fn job_stem(slice: u64, scheme: PatternScheme, rate: f64, method: ReconMethod) -> String {
    format!("s{slice}_{}_r{}_{}", scheme.name(), rate_key(rate), method.name())
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Coils matching those used by [`build_scenario`] for the same geometry.
pub fn standard_coils(rows: usize, cols: usize, count: usize) -> CliResult<CoilSet> {
    Ok(normalize_coils(&synth_coils(rows, cols, count)?))
}

/// Masked relative errors of R2* and X0 against the scenario truth.
pub fn score(scenario: &Scenario, result: &ReconResult) -> CliResult<(f64, f64)> {
    let r2 = masked_relative_error(&scenario.phantom.r2star, &result.r2star, &scenario.mask)?;
    let x0 = masked_relative_error(&scenario.phantom.x0, &result.x0, &scenario.mask)?;
    Ok((r2, x0))
}

fn x0_window(scenario: &Scenario) -> (f64, f64) {
    (0.0, io::data_window(&scenario.phantom.x0, Some(&scenario.mask)).1)
}

fn write_maps(dir: &Path, stem: &str, result: &ReconResult, x0_window: (f64, f64)) -> CliResult<()> {
    let stack = MapStack::new(vec![
        ("r2star".into(), result.r2star.clone()),
        ("x0".into(), result.x0.clone()),
    ])?;
    io::save_maps(dir.join(format!("{stem}.t2smaps")), &stack)?;
    io::export_map_image(&result.r2star, dir.join(format!("{stem}.r2star.pgm")), R2STAR_WINDOW)?;
    io::export_map_image(&result.x0, dir.join(format!("{stem}.x0.pgm")), x0_window)?;
    Ok(())
}

fn sort_rows(rows: &mut [JobRow]) {
    rows.sort_by(|a, b| {
        (a.slice, a.scheme.name())
            .cmp(&(b.slice, b.scheme.name()))
            .then(a.rate.total_cmp(&b.rate))
            .then(a.method.cmp(&b.method))
    });
}

pub fn metrics_csv(rows: &[JobRow], hash: &str) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.9e},{:.9e},{},{},{hash}",
            r.slice,
            r.scheme.name(),
            rate_key(r.rate),
            r.method.name(),
            r.r2star_error,
            r.x0_error,
            r.iterations,
            r.converged
        )
        .expect("write to string");
    }
    out
}

fn timings_csv(rows: &[JobRow]) -> String {
    let mut out = format!("{TIMINGS_HEADER}\n");
    for r in rows {
        let per = r.elapsed_ms / r.iterations.max(1) as f64;
        writeln!(
            out,
            "{},{},{},{},{:.3},{:.3}",
            r.slice,
            r.scheme.name(),
            rate_key(r.rate),
            r.method.name(),
            r.elapsed_ms,
            per
        )
        .expect("write to string");
    }
    out
}

fn run_job(cfg: &ExperimentConfig, slice: u64, rate: f64, scheme: PatternScheme, method: ReconMethod, maps: Option<&Path>) -> CliResult<JobRow> {
    let scenario = build_scenario(&cfg.scenario_spec(slice, rate, scheme)?)?;
    let start = Instant::now();
    let result = method.run(&scenario.data, &scenario.coils, &cfg.params_for(method))?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let (r2star_error, x0_error) = score(&scenario, &result)?;
    if let Some(dir) = maps {
        write_maps(dir, &job_stem(slice, scheme, rate, method), &result, x0_window(&scenario))?;
    }
    Ok(JobRow {
        slice,
        scheme,
        rate,
        method,
        r2star_error,
        x0_error,
        iterations: result.iterations(),
        converged: result.converged,
        elapsed_ms,
    })
}

/// Every (slice, rate, method) of the configuration, run on the worker pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<ExperimentSummary> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let maps = out.join("maps");
    create_dir(&maps)?;
    let scheme = cfg.scheme()?;
    let jobs: Vec<(u64, f64, ReconMethod)> = cfg
        .phantom
        .seeds
        .iter()
        .flat_map(|&s| cfg.sampling.rates.iter().map(move |&r| (s, r)))
        .flat_map(|(s, r)| cfg.methods().expect("validated").into_iter().map(move |m| (s, r, m)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(s, r, m)| run_job(cfg, s, r, scheme, m, Some(&maps)))
        .collect::<CliResult<Vec<_>>>()?;
    sort_rows(&mut rows);
    let hash = cfg.hash();
    write_file(&out.join("config.toml"), cfg.canonical_toml())?;
    write_file(&out.join("metrics.csv"), metrics_csv(&rows, &hash))?;
    write_file(&out.join("timings.csv"), timings_csv(&rows))?;
    Ok(ExperimentSummary {
        rows,
        output_dir: out,
        config_hash: hash,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeRow {
    pub slice: u64,
    pub rate: f64,
    pub fixed: f64,
    pub complementary: f64,
}

#[derive(Clone, Debug)]
pub struct SchemeComparison {
    pub rows: Vec<SchemeRow>,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl SchemeComparison {
    /// `(rate, median fixed error, median complementary error)` per rate.
    pub fn medians(&self) -> Vec<(f64, f64, f64)> {
        let mut rates: Vec<f64> = self.rows.iter().map(|r| r.rate).collect();
        rates.sort_by(f64::total_cmp);
        rates.dedup();
        rates
            .into_iter()
            .map(|rate| {
                let (mut f, mut c): (Vec<f64>, Vec<f64>) = self
                    .rows
                    .iter()
                    .filter(|r| r.rate == rate)
                    .map(|r| (r.fixed, r.complementary))
                    .unzip();
                (rate, median(&mut f), median(&mut c))
            })
            .collect()
    }
}

/// Joint recovery of every slice and rate under fixed and complementary
/// patterns; writes `schemes.csv` (per slice) and `schemes_summary.csv`
/// (medians).
pub fn compare_schemes(cfg: &ExperimentConfig) -> CliResult<SchemeComparison> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let jobs: Vec<(u64, f64)> = cfg
        .phantom
        .seeds
        .iter()
        .flat_map(|&s| cfg.sampling.rates.iter().map(move |&r| (s, r)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(slice, rate)| {
            let err = |scheme| run_job(cfg, slice, rate, scheme, ReconMethod::JointAdmm, None).map(|j| j.r2star_error);
            Ok(SchemeRow {
                slice,
                rate,
                fixed: err(PatternScheme::Fixed)?,
                complementary: err(PatternScheme::Complementary)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    rows.sort_by(|a, b| a.slice.cmp(&b.slice).then(a.rate.total_cmp(&b.rate)));
    let hash = cfg.hash();
    let mut table = format!("{SCHEMES_HEADER}\n");
    for r in &rows {
        writeln!(table, "{},{},{:.9e},{:.9e},{hash}", r.slice, rate_key(r.rate), r.fixed, r.complementary).expect("write to string");
    }
    let cmp = SchemeComparison { rows };
    let mut summary = String::from("rate,median_fixed,median_complementary,relative_gap\n");
    for (rate, f, c) in cmp.medians() {
        let gap = (c - f).abs() / f.max(c);
        writeln!(summary, "{},{f:.9e},{c:.9e},{gap:.6}", rate_key(rate)).expect("write to string");
    }
    write_file(&cfg.output_dir.join("schemes.csv"), table)?;
    write_file(&cfg.output_dir.join("schemes_summary.csv"), summary)?;
    Ok(cmp)
}

/// Grid search on the first slice at the first rate; writes `tune.csv` and
/// `tuned_params.toml`.
pub fn tune(cfg: &ExperimentConfig) -> CliResult<TuneOutcome> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let s = build_scenario(&cfg.scenario_spec(cfg.phantom.seeds[0], cfg.sampling.rates[0], cfg.scheme()?)?)?;
    let slice = TrainingSlice {
        data: &s.data,
        coils: &s.coils,
        truth_xi: &s.truth_xi,
        truth_x0: &s.phantom.x0,
        truth_r2star: &s.phantom.r2star,
        mask: &s.mask,
    };
    let outcome = tune_parameters(&slice, &cfg.tune_grids(), &cfg.params_for(ReconMethod::JointAdmm))?;
    let mut table = String::from("stage,value_a,value_b,score\n");
    for r in &outcome.table {
        writeln!(table, "{},{:e},{:e},{:.9e}", r.stage, r.values.0, r.values.1, r.score).expect("write to string");
    }
    let p = &outcome.params;
    let best = format!(
        "[params]\nlambda1 = {:e}\nlambda2 = {:e}\nlambda3 = {:e}\nlambda = {:e}\nrho = {:e}\n",
        p.lambda1, p.lambda2, p.lambda3, p.lambda, p.rho
    );
    write_file(&cfg.output_dir.join("tune.csv"), table)?;
    write_file(&cfg.output_dir.join("tuned_params.toml"), best)?;
    Ok(outcome)
}

/// Simulated k-space of one slice plus its ground truth maps
/// (`x0`, `r2star`, `support`). Returns the two file paths.
pub fn simulate(cfg: &ExperimentConfig, slice: u64, rate: f64) -> CliResult<(PathBuf, PathBuf)> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let s = build_scenario(&cfg.scenario_spec(slice, rate, cfg.scheme()?)?)?;
    let kspace = cfg.output_dir.join(format!("s{slice}_r{}.t2sk", rate_key(rate)));
    let truth = cfg.output_dir.join(format!("s{slice}_truth.t2smaps"));
    io::save_kspace(&kspace, &s.data)?;
    let stack = MapStack::new(vec![
        ("x0".into(), s.phantom.x0.clone()),
        ("r2star".into(), s.phantom.r2star.clone()),
        ("support".into(), s.mask.clone()),
    ])?;
    io::save_maps(&truth, &stack)?;
    Ok((kspace, truth))
}

/// Reconstruction of a stored acquisition. Coils are regenerated from the
/// geometry. With `truth`, returns the masked R2* and X0 errors.
pub fn recon_file(
    cfg: &ExperimentConfig,
    kspace: &Path,
    method: ReconMethod,
    truth: Option<&Path>,
) -> CliResult<(PathBuf, Option<(f64, f64)>)> {
    let data: KSpaceData = io::load_kspace(kspace)?;
    let (rows, cols) = data.dims();
    let coils = standard_coils(rows, cols, data.coils())?;
    let result = method.run(&data, &coils, &cfg.params_for(method))?;
    create_dir(&cfg.output_dir)?;
    let stem = kspace.file_stem().and_then(|s| s.to_str()).unwrap_or("recon");
    let stem = format!("{stem}_{}", method.name());
    let mut window = (0.0, io::data_window(&result.x0, None).1);
    let errors = match truth {
        Some(path) => {
            let t = io::load_maps(path)?;
            let get = |name: &str| {
                t.get(name)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("{} has no '{name}' map", path.display())))
            };
            let (x0, r2, support): (RealImage, RealImage, RealImage) = (get("x0")?, get("r2star")?, get("support")?);
            window = (0.0, io::data_window(&x0, Some(&support)).1);
            Some((
                masked_relative_error(&r2, &result.r2star, &support)?,
                masked_relative_error(&x0, &result.x0, &support)?,
            ))
        }
        None => None,
    };
    write_maps(&cfg.output_dir, &stem, &result, window)?;
    Ok((cfg.output_dir.join(format!("{stem}.t2smaps")), errors))
}

/// PGM rendering of one named map; the window defaults to the data range.
pub fn export(maps: &Path, name: &str, window: Option<(f64, f64)>, out: &Path) -> CliResult<()> {
    let stack = io::load_maps(maps)?;
    let img = stack
        .get(name)
        .ok_or_else(|| CliError::Config(format!("{} has no '{name}' map (have {})", maps.display(), stack.names.join(", "))))?;
    let window = window.unwrap_or_else(|| io::data_window(img, None));
    Ok(io::export_map_image(img, out, window)?)
}
