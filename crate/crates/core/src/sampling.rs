//! Poisson-disk undersampling of the phase-encode plane.
//!
//! Patterns are stored centered: the DC sample sits at `(rows / 2, cols / 2)`.
//! The square calibration region around it is always sampled and exempt from
//! the minimum-distance rule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::transforms::fft::centered_to_native;

/// Candidates drawn around each active point during dart throwing.
const BRIDSON_CANDIDATES: usize = 30;
/// Probability of rejecting a candidate already used by an earlier echo.
const COMPLEMENTARY_REJECTION: f64 = 0.9;
/// Relative slack allowed between achieved and target rate.
pub const RATE_TOLERANCE: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPattern {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    d_min: f64,
    target_rate: f64,
    calib_radius: usize,
    seed: u64,
}

/// Inputs to [`poisson_disk`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonDiskParams {
    pub rows: usize,
    pub cols: usize,
    pub target_rate: f64,
    pub d_min: f64,
    pub calib_radius: usize,
    pub seed: u64,
}

impl SamplingPattern {
    /// Wrap an explicit centered mask (no generator metadata).
    pub fn from_mask(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || mask.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "mask of length {} does not fit {rows}x{cols}",
                mask.len()
            )));
        }
        let rate = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        Ok(Self {
            rows,
            cols,
            mask,
            d_min: 0.0,
            target_rate: rate,
            calib_radius: 0,
            seed: 0,
        })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_mask(rows, cols, vec![true; rows * cols]).expect("nonzero dims")
    }

    /// Reassemble a pattern with all metadata (used by the file reader).
    pub fn from_parts(params: PoissonDiskParams, mask: Vec<bool>) -> Result<Self> {
        let mut p = Self::from_mask(params.rows, params.cols, mask)?;
        p.d_min = params.d_min;
        p.target_rate = params.target_rate;
        p.calib_radius = params.calib_radius;
        p.seed = params.seed;
        Ok(p)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn target_rate(&self) -> f64 {
        self.target_rate
    }

    pub fn calib_radius(&self) -> usize {
        self.calib_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> PoissonDiskParams {
        PoissonDiskParams {
            rows: self.rows,
            cols: self.cols,
            target_rate: self.target_rate,
            d_min: self.d_min,
            calib_radius: self.calib_radius,
            seed: self.seed,
        }
    }

    pub fn is_sampled(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn rate(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    pub fn in_calibration(&self, r: usize, c: usize) -> bool {
        in_calibration(self.rows, self.cols, self.calib_radius, r, c)
    }

    /// The mask reordered so that index 0 is the DC sample (FFT layout).
    pub fn native_mask(&self) -> Vec<bool> {
        let mut out = vec![false; self.mask.len()];
        for r in 0..self.rows {
            let nr = centered_to_native(r, self.rows);
            for c in 0..self.cols {
                let nc = centered_to_native(c, self.cols);
                out[nr * self.cols + nc] = self.mask[r * self.cols + c];
            }
        }
        out
    }
}

fn in_calibration(rows: usize, cols: usize, radius: usize, r: usize, c: usize) -> bool {
    let (cr, cc) = (rows / 2, cols / 2);
    r.abs_diff(cr) <= radius && c.abs_diff(cc) <= radius
}

struct Generator<'a> {
    rows: usize,
    cols: usize,
    calib_radius: usize,
    d_min: f64,
    /// sampled, including calibration
    mask: Vec<bool>,
    /// sampled outside calibration
    free: Vec<bool>,
    avoid: Option<&'a [bool]>,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    fn is_calib(&self, r: usize, c: usize) -> bool {
        in_calibration(self.rows, self.cols, self.calib_radius, r, c)
    }

    fn avoided(&self, i: usize) -> bool {
        self.avoid.is_some_and(|a| a[i])
    }

    /// True if a new non-calibration point at (r, c) keeps every pairwise distance >= d_min.
    fn fits(&self, r: usize, c: usize) -> bool {
        if self.mask[self.idx(r, c)] || self.is_calib(r, c) {
            return false;
        }
        if self.d_min <= 1.0 {
            return true;
        }
        let reach = self.d_min.ceil() as isize;
        let d2 = self.d_min * self.d_min;
        for dr in -reach..=reach {
            let rr = r as isize + dr;
            if rr < 0 || rr >= self.rows as isize {
                continue;
            }
            for dc in -reach..=reach {
                let cc = c as isize + dc;
                if cc < 0 || cc >= self.cols as isize {
                    continue;
                }
                if ((dr * dr + dc * dc) as f64) < d2 && self.free[self.idx(rr as usize, cc as usize)] {
                    return false;
                }
            }
        }
        true
    }

    fn insert(&mut self, r: usize, c: usize) {
        let i = self.idx(r, c);
        self.mask[i] = true;
        self.free[i] = true;
    }

    fn remove(&mut self, i: usize) {
        self.mask[i] = false;
        self.free[i] = false;
    }

    fn free_count(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Bridson dart throwing with annulus candidates over the whole grid.
    fn dart_throw(&mut self) {
        let mut order: Vec<usize> = (0..self.mask.len()).collect();
        order.shuffle(&mut self.rng);
        let mut active = Vec::new();
        for &start in &order {
            let (r, c) = (start / self.cols, start % self.cols);
            if self.fits(r, c) && !self.avoided(start) {
                self.insert(r, c);
                active.push((r, c));
                break;
            }
        }
        let radius = self.d_min;
        while !active.is_empty() {
            let pick = self.rng.gen_range(0..active.len());
            let (r, c) = active[pick];
            let mut placed = false;
            for _ in 0..BRIDSON_CANDIDATES {
                let rad = self.rng.gen_range(radius..2.0 * radius);
                let ang = self.rng.gen_range(0.0..std::f64::consts::TAU);
                let nr = (r as f64 + rad * ang.sin()).round();
                let nc = (c as f64 + rad * ang.cos()).round();
                if nr < 0.0 || nc < 0.0 || nr >= self.rows as f64 || nc >= self.cols as f64 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if self.avoided(self.idx(nr, nc)) && self.rng.gen_bool(COMPLEMENTARY_REJECTION) {
                    continue;
                }
                if self.fits(nr, nc) {
                    self.insert(nr, nc);
                    active.push((nr, nc));
                    placed = true;
                    break;
                }
            }
            if !placed {
                active.swap_remove(pick);
            }
        }
    }

    /// Remove random free points (previously used ones first) down to `target`.
    fn thin(&mut self, target: usize) {
        let mut points: Vec<usize> = (0..self.free.len()).filter(|&i| self.free[i]).collect();
        points.shuffle(&mut self.rng);
        if self.avoid.is_some() {
            points.sort_by_key(|&i| !self.avoided(i));
        }
        let excess = points.len().saturating_sub(target);
        for &i in &points[..excess] {
            self.remove(i);
        }
    }

    /// Add admissible points in random order (unused ones first) up to `target`.
    fn fill(&mut self, target: usize) {
        let mut current = self.free_count();
        if current >= target {
            return;
        }
        let mut order: Vec<usize> = (0..self.mask.len()).collect();
        order.shuffle(&mut self.rng);
        if self.avoid.is_some() {
            order.sort_by_key(|&i| self.avoided(i));
        }
        for i in order {
            if current >= target {
                break;
            }
            let (r, c) = (i / self.cols, i % self.cols);
            if self.fits(r, c) {
                self.insert(r, c);
                current += 1;
            }
        }
    }
}

/// Poisson-disk pattern with a fully sampled calibration square.
///
/// `d_min <= 1` imposes no constraint on an integer grid, so the result is a
/// uniform random draw. Fails with [`Error::InfeasibleRate`] when the achieved
/// rate cannot get within [`RATE_TOLERANCE`] of the target.
pub fn poisson_disk(params: PoissonDiskParams) -> Result<SamplingPattern> {
    generate(params, None)
}

fn generate(params: PoissonDiskParams, avoid: Option<&[bool]>) -> Result<SamplingPattern> {
    let PoissonDiskParams {
        rows,
        cols,
        target_rate,
        d_min,
        calib_radius,
        seed,
    } = params;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("pattern dimensions must be positive".into()));
    }
    if !(target_rate > 0.0 && target_rate <= 1.0) {
        return Err(Error::InvalidInput(format!("target rate {target_rate} outside (0, 1]")));
    }
    if !(d_min >= 0.0) || !d_min.is_finite() {
        return Err(Error::InvalidInput(format!("d_min {d_min} must be finite and nonnegative")));
    }
    let n = rows * cols;
    let mut gen = Generator {
        rows,
        cols,
        calib_radius,
        d_min,
        mask: vec![false; n],
        free: vec![false; n],
        avoid,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    for r in 0..rows {
        for c in 0..cols {
            if gen.is_calib(r, c) {
                let i = gen.idx(r, c);
                gen.mask[i] = true;
            }
        }
    }
    let calib_count = gen.mask.iter().filter(|&&m| m).count();
    let target_total = ((target_rate * n as f64).round() as usize).max(calib_count);
    let target_free = target_total - calib_count;

    if d_min > 1.0 {
        gen.dart_throw();
        gen.thin(target_free);
    }
    gen.fill(target_free);

    let achieved = gen.mask.iter().filter(|&&m| m).count() as f64 / n as f64;
    if (achieved - target_rate).abs() > RATE_TOLERANCE * target_rate {
        return Err(Error::InfeasibleRate {
            target: target_rate,
            d_min,
            achievable: achieved,
        });
    }
    Ok(SamplingPattern {
        rows,
        cols,
        mask: gen.mask,
        d_min,
        target_rate,
        calib_radius,
        seed,
    })
}

/// Like [`poisson_disk`], but if the rate is infeasible for `d_min` the
/// distance is relaxed through the lattice distances `sqrt(k)` below it until
/// generation succeeds. The returned pattern records the distance used.
pub fn poisson_disk_relaxed(params: PoissonDiskParams) -> Result<SamplingPattern> {
    let mut ladder = vec![params.d_min];
    let top = (params.d_min * params.d_min).ceil() as u64;
    for k in (1..=top).rev() {
        let d = (k as f64).sqrt();
        if d < params.d_min {
            ladder.push(d);
        }
    }
    let mut last_err = None;
    for d in ladder {
        match poisson_disk(PoissonDiskParams { d_min: d, ..params }) {
            Ok(p) => return Ok(p),
            Err(e @ Error::InfeasibleRate { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("ladder is never empty"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatternScheme {
    /// One pattern shared by every echo.
    Fixed,
    /// Distinct per-echo patterns that avoid re-using earlier echoes' samples.
    Complementary,
}

impl PatternScheme {
    pub fn name(self) -> &'static str {
        match self {
            PatternScheme::Fixed => "fixed",
            PatternScheme::Complementary => "complementary",
        }
    }
}

impl std::str::FromStr for PatternScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PatternScheme::Fixed),
            "complementary" => Ok(PatternScheme::Complementary),
            other => Err(Error::InvalidInput(format!("unknown sampling scheme '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoPatternSet {
    patterns: Vec<SamplingPattern>,
    scheme: PatternScheme,
}

impl EchoPatternSet {
    pub fn new(patterns: Vec<SamplingPattern>, scheme: PatternScheme) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidInput("no patterns".into()));
        }
        for p in &patterns[1..] {
            if p.dims() != patterns[0].dims() {
                return Err(Error::DimensionMismatch {
                    expected: patterns[0].dims(),
                    found: p.dims(),
                });
            }
        }
        Ok(Self { patterns, scheme })
    }

    pub fn patterns(&self) -> &[SamplingPattern] {
        &self.patterns
    }

    pub fn scheme(&self) -> PatternScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn truncated(&self, keep: usize) -> Self {
        Self {
            patterns: self.patterns[..keep].to_vec(),
            scheme: self.scheme,
        }
    }

    /// Fraction of the grid sampled by at least one echo.
    pub fn union_coverage(&self) -> f64 {
        let n = self.patterns[0].mask.len();
        let covered = (0..n)
            .filter(|&i| self.patterns.iter().any(|p| p.mask[i]))
            .count();
        covered as f64 / n as f64
    }
}

/// Per-echo patterns. The first echo uses `params` as given (relaxing `d_min`
/// if needed); later complementary echoes reuse that distance with derived seeds.
pub fn make_echo_patterns(echoes: usize, scheme: PatternScheme, params: PoissonDiskParams) -> Result<EchoPatternSet> {
    if echoes == 0 {
        return Err(Error::InvalidInput("need at least one echo".into()));
    }
    let first = poisson_disk_relaxed(params)?;
    let patterns = match scheme {
        PatternScheme::Fixed => vec![first; echoes],
        PatternScheme::Complementary => {
            let base = PoissonDiskParams {
                d_min: first.d_min,
                ..params
            };
            let mut used = first.mask.clone();
            let mut out = vec![first];
            for e in 1..echoes {
                let p = PoissonDiskParams {
                    seed: echo_seed(params.seed, e),
                    ..base
                };
                let pattern = generate(p, Some(&used))?;
                for (u, &m) in used.iter_mut().zip(&pattern.mask) {
                    *u |= m;
                }
                out.push(pattern);
            }
            out
        }
    };
    EchoPatternSet::new(patterns, scheme)
}

fn echo_seed(seed: u64, echo: usize) -> u64 {
    seed.wrapping_add((echo as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rows: usize, cols: usize, rate: f64, d_min: f64, calib: usize, seed: u64) -> PoissonDiskParams {
        PoissonDiskParams {
            rows,
            cols,
            target_rate: rate,
            d_min,
            calib_radius: calib,
            seed,
        }
    }

    fn min_free_distance(p: &SamplingPattern) -> f64 {
        let pts: Vec<(usize, usize)> = (0..p.rows)
            .flat_map(|r| (0..p.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| p.is_sampled(r, c) && !p.in_calibration(r, c))
            .collect();
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let dr = pts[i].0 as f64 - pts[j].0 as f64;
                let dc = pts[i].1 as f64 - pts[j].1 as f64;
                best = best.min((dr * dr + dc * dc).sqrt());
            }
        }
        best
    }

    #[test]
    fn full_rate_without_distance_is_full() {
        let p = poisson_disk(params(16, 16, 1.0, 0.0, 2, 1)).unwrap();
        assert_eq!(p.count(), 256);
    }

    #[test]
    fn min_distance_and_rate_hold() {
        let p = poisson_disk(params(64, 64, 0.15, 2.0, 3, 9)).unwrap();
        assert!(min_free_distance(&p) >= 2.0);
        assert!((p.rate() - 0.15).abs() <= 0.1 * 0.15);
        for r in 29..=35 {
            for c in 29..=35 {
                assert!(p.is_sampled(r, c));
            }
        }
    }

    #[test]
    fn infeasible_rate_is_rejected_with_bound() {
        match poisson_disk(params(64, 64, 0.5, 2.0, 2, 3)) {
            Err(Error::InfeasibleRate { achievable, .. }) => assert!(achievable < 0.3),
            other => panic!("expected infeasible, got {other:?}"),
        }
        let relaxed = poisson_disk_relaxed(params(64, 64, 0.5, 2.0, 2, 3)).unwrap();
        assert!(relaxed.d_min() < 2.0);
        assert!((relaxed.rate() - 0.5).abs() <= 0.05);
    }

    #[test]
    fn calibration_larger_than_target_is_rejected() {
        assert!(matches!(
            poisson_disk(params(16, 16, 0.05, 0.0, 4, 1)),
            Err(Error::InfeasibleRate { .. })
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = poisson_disk(params(48, 40, 0.2, 2.0, 2, 77)).unwrap();
        let b = poisson_disk(params(48, 40, 0.2, 2.0, 2, 77)).unwrap();
        let c = poisson_disk(params(48, 40, 0.2, 2.0, 2, 78)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mask(), c.mask());
    }

    #[test]
    fn native_mask_puts_center_at_origin() {
        let mut mask = vec![false; 36];
        mask[3 * 6 + 3] = true;
        let p = SamplingPattern::from_mask(6, 6, mask).unwrap();
        let native = p.native_mask();
        assert!(native[0]);
        assert_eq!(native.iter().filter(|&&m| m).count(), 1);
    }

    #[test]
    fn echo_schemes() {
        let base = params(48, 48, 0.1, 2.0, 2, 5);
        let single_f = make_echo_patterns(1, PatternScheme::Fixed, base).unwrap();
        let single_c = make_echo_patterns(1, PatternScheme::Complementary, base).unwrap();
        assert_eq!(single_f.patterns(), single_c.patterns());

        let fixed = make_echo_patterns(6, PatternScheme::Fixed, base).unwrap();
        assert!(fixed.patterns().iter().all(|p| p.mask() == fixed.patterns()[0].mask()));

        let comp = make_echo_patterns(4, PatternScheme::Complementary, base).unwrap();
        let cov = comp.union_coverage();
        let single = comp.patterns()[0].rate();
        assert!(cov > single && cov > 0.1 && cov <= 0.4 + 1e-12, "coverage {cov}");
        for p in comp.patterns() {
            assert!(min_free_distance(p) >= 2.0);
        }
    }

    #[test]
    fn scheme_parse() {
        assert_eq!("fixed".parse::<PatternScheme>().unwrap(), PatternScheme::Fixed);
        assert!("nope".parse::<PatternScheme>().is_err());
    }
}
