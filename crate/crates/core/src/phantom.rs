//! Synthetic ground truth and the forward acquisition model
//! `Y_ij = P_i F (S_j Z_i X_0 exp(-t_i R2*)) + noise`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{CoilSet, ComplexImage, EchoTimes, MultiEchoSet, RealImage};
use crate::kspace::KSpaceData;
use crate::sampling::EchoPatternSet;
use crate::transforms::operator::build_operators;

/// Ground-truth maps. Phase evolves linearly in time:
/// `theta_i = phase_offset + t_i * off_resonance` (radians, t in ms).
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub x0: RealImage,
    /// Relaxation rate in 1/ms; zero outside the support.
    pub r2star: RealImage,
    pub phase_offset: RealImage,
    /// rad/ms
    pub off_resonance: RealImage,
    pub support: RealImage,
}

impl Phantom {
    pub fn dims(&self) -> (usize, usize) {
        self.x0.dims()
    }

    /// Per-echo phase maps wrapped to [0, 2pi).
    pub fn theta(&self, times: &EchoTimes) -> MultiEchoSet<f64> {
        let echoes = times
            .as_slice()
            .iter()
            .map(|&t| {
                self.phase_offset
                    .zip_map(&self.off_resonance, |p, w| (p + t * w).rem_euclid(TAU))
            })
            .collect();
        MultiEchoSet::new(echoes, times.clone()).expect("consistent phantom dims")
    }

    pub fn support_fraction(&self) -> f64 {
        self.support.as_slice().iter().sum::<f64>() / self.support.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhantomPreset {
    /// Nested ellipses, loosely brain-like.
    SheppLike,
    /// Rectangular tiles with distinct relaxation levels.
    Blocks,
    /// Sums of random Gaussian bumps.
    RandomSmooth,
}

impl PhantomPreset {
    pub fn name(self) -> &'static str {
        match self {
            PhantomPreset::SheppLike => "shepp-like",
            PhantomPreset::Blocks => "blocks",
            PhantomPreset::RandomSmooth => "random-smooth",
        }
    }
}

impl std::str::FromStr for PhantomPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp-like" => Ok(PhantomPreset::SheppLike),
            "blocks" => Ok(PhantomPreset::Blocks),
            "random-smooth" => Ok(PhantomPreset::RandomSmooth),
            other => Err(Error::InvalidInput(format!("unknown phantom preset '{other}'"))),
        }
    }
}

pub const R2STAR_MIN: f64 = 0.01;
pub const R2STAR_MAX: f64 = 0.2;

/// Normalized coordinates in [-1, 1].
fn coords(rows: usize, cols: usize, r: usize, c: usize) -> (f64, f64) {
    let y = 2.0 * (r as f64 + 0.5) / rows as f64 - 1.0;
    let x = 2.0 * (c as f64 + 0.5) / cols as f64 - 1.0;
    (y, x)
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.ax).powi(2) + (v / self.ay).powi(2) <= 1.0
    }
}

pub fn make_phantom(rows: usize, cols: usize, preset: PhantomPreset, seed: u64) -> Phantom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn jitter(rng: &mut impl Rng, scale: f64) -> f64 {
        rng.gen_range(-scale..scale)
    }

    let head = Ellipse {
        cy: jitter(&mut rng, 0.03),
        cx: jitter(&mut rng, 0.03),
        ay: 0.84 + jitter(&mut rng, 0.04),
        ax: 0.70 + jitter(&mut rng, 0.04),
        angle: jitter(&mut rng, 0.1),
    };
    let support = RealImage::from_fn(rows, cols, |r, c| {
        let (y, x) = coords(rows, cols, r, c);
        if head.contains(y, x) {
            1.0
        } else {
            0.0
        }
    });

    // (ellipse, x0, r2*) regions painted in order over a background tissue
    let (base_x0, base_r2) = (0.75, 0.03);
    let mut x0 = support.map(|&s| s * base_x0);
    let mut r2 = support.map(|&s| s * base_r2);

    match preset {
        PhantomPreset::SheppLike => {
            let regions = [
                (Ellipse { cy: -0.05, cx: -0.25, ay: 0.38, ax: 0.16, angle: 0.3 }, 0.55, 0.05),
                (Ellipse { cy: -0.05, cx: 0.25, ay: 0.38, ax: 0.16, angle: -0.3 }, 0.55, 0.05),
                (Ellipse { cy: 0.35, cx: 0.0, ay: 0.18, ax: 0.28, angle: 0.0 }, 0.95, 0.02),
                (Ellipse { cy: -0.45, cx: 0.0, ay: 0.12, ax: 0.22, angle: 0.0 }, 0.65, 0.08),
                (Ellipse { cy: 0.05, cx: 0.0, ay: 0.10, ax: 0.08, angle: 0.0 }, 0.85, 0.12),
                (Ellipse { cy: 0.6, cx: -0.2, ay: 0.07, ax: 0.07, angle: 0.0 }, 0.45, 0.04),
            ];
            for (mut e, v0, vr) in regions {
                e.cy += jitter(&mut rng, 0.04);
                e.cx += jitter(&mut rng, 0.04);
                e.ay *= 1.0 + jitter(&mut rng, 0.1);
                e.ax *= 1.0 + jitter(&mut rng, 0.1);
                for r in 0..rows {
                    for c in 0..cols {
                        let (y, x) = coords(rows, cols, r, c);
                        if support[(r, c)] > 0.0 && e.contains(y, x) {
                            x0[(r, c)] = v0;
                            r2[(r, c)] = vr;
                        }
                    }
                }
            }
        }
        PhantomPreset::Blocks => {
            let levels = [(0.55, 0.02), (0.9, 0.04), (0.65, 0.07), (0.8, 0.1), (0.5, 0.05), (0.95, 0.025)];
            let shift = rng.gen_range(0..levels.len());
            for r in 0..rows {
                for c in 0..cols {
                    if support[(r, c)] == 0.0 {
                        continue;
                    }
                    let br = (r * 4) / rows;
                    let bc = (c * 3) / cols;
                    let (v0, vr) = levels[(br * 3 + bc + shift) % levels.len()];
                    x0[(r, c)] = v0;
                    r2[(r, c)] = vr;
                }
            }
        }
        PhantomPreset::RandomSmooth => {
            let bumps: Vec<(f64, f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(0.15..0.4),
                        rng.gen_range(-0.25..0.25),
                        rng.gen_range(-0.04..0.06),
                    )
                })
                .collect();
            for r in 0..rows {
                for c in 0..cols {
                    if support[(r, c)] == 0.0 {
                        continue;
                    }
                    let (y, x) = coords(rows, cols, r, c);
                    let (mut v0, mut vr) = (base_x0, base_r2);
                    for &(by, bx, w, a0, ar) in &bumps {
                        let g = (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * w * w)).exp();
                        v0 += a0 * g;
                        vr += ar * g;
                    }
                    x0[(r, c)] = v0.clamp(0.3, 1.0);
                    r2[(r, c)] = vr.clamp(0.015, 0.15);
                }
            }
        }
    }

    // gentle smooth shading keeps x0 piecewise-smooth rather than flat
    let (gy, gx) = (jitter(&mut rng, 0.08), jitter(&mut rng, 0.08));
    let x0 = RealImage::from_fn(rows, cols, |r, c| {
        let (y, x) = coords(rows, cols, r, c);
        (x0[(r, c)] * (1.0 + gy * y + gx * x)).clamp(0.0, 1.0)
    });
    let r2star = r2.map(|&v| if v > 0.0 { v.clamp(R2STAR_MIN, R2STAR_MAX) } else { 0.0 });

    let p = [jitter(&mut rng, TAU), jitter(&mut rng, 0.8), jitter(&mut rng, 0.8), jitter(&mut rng, 0.5)];
    let w = [jitter(&mut rng, 0.02), jitter(&mut rng, 0.03), jitter(&mut rng, 0.03)];
    let phase_offset = RealImage::from_fn(rows, cols, |r, c| {
        let (y, x) = coords(rows, cols, r, c);
        (p[0] + p[1] * x + p[2] * y + p[3] * x * y).rem_euclid(TAU)
    });
    let off_resonance = RealImage::from_fn(rows, cols, |r, c| {
        let (y, x) = coords(rows, cols, r, c);
        w[0] + w[1] * x + w[2] * y
    });

    Phantom {
        x0,
        r2star,
        phase_offset,
        off_resonance,
        support,
    }
}

/// `X_i = X_0 exp(-t_i R2*)`.
pub fn decay_images(phantom: &Phantom, times: &EchoTimes) -> MultiEchoSet<f64> {
    let echoes = times
        .as_slice()
        .iter()
        .map(|&t| phantom.x0.zip_map(&phantom.r2star, |x, r| x * (-t * r).exp()))
        .collect();
    MultiEchoSet::new(echoes, times.clone()).expect("consistent phantom dims")
}

/// Smooth Gaussian-lobe sensitivities centered on equispaced points just
/// outside the image border (one centered lobe when `count == 1`), each with
/// a gentle linear phase. Use [`normalize_coils`] for unit root-sum-of-squares.
pub fn synth_coils(rows: usize, cols: usize, count: usize) -> Result<CoilSet> {
    if count == 0 {
        return Err(Error::InvalidInput("need at least one coil".into()));
    }
    let width = 0.9;
    let maps = (0..count)
        .map(|j| {
            let (cy, cx) = if count == 1 {
                (0.0, 0.0)
            } else {
                let a = TAU * j as f64 / count as f64;
                (1.1 * a.sin(), 1.1 * a.cos())
            };
            let tilt = 0.4 * j as f64;
            ComplexImage::from_fn(rows, cols, |r, c| {
                let (y, x) = coords(rows, cols, r, c);
                let mag = (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * width * width)).exp();
                let phase = tilt + 0.3 * (x * (j as f64 + 1.0).cos() + y * (j as f64 + 1.0).sin());
                Complex64::from_polar(mag, phase)
            })
        })
        .collect();
    CoilSet::new(maps)
}

/// Scale coil maps so that the root-sum-of-squares is one at every pixel.
pub fn normalize_coils(coils: &CoilSet) -> CoilSet {
    let rss = coils.root_sum_of_squares();
    let maps = coils
        .maps()
        .iter()
        .map(|m| m.zip_map(&rss, |s, &n| if n > 0.0 { s / n } else { *s }))
        .collect();
    CoilSet::new(maps).expect("same shapes")
}

#[derive(Clone, Debug)]
pub struct AcquisitionSpec {
    pub times: EchoTimes,
    pub coils: CoilSet,
    pub patterns: EchoPatternSet,
    /// Standard deviation of the complex noise per k-space sample (E|n|^2 = sigma^2).
    pub noise_sigma: f64,
}

pub fn simulate_kspace(phantom: &Phantom, spec: &AcquisitionSpec, seed: u64) -> Result<KSpaceData> {
    let dims = phantom.dims();
    if spec.coils.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: spec.coils.dims(),
        });
    }
    if spec.patterns.len() != spec.times.len() {
        return Err(Error::InvalidInput(format!(
            "{} patterns for {} echoes",
            spec.patterns.len(),
            spec.times.len()
        )));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidInput("noise sigma must be nonnegative".into()));
    }
    let ops = build_operators(spec.patterns.patterns(), &spec.coils)?;
    let decay = decay_images(phantom, &spec.times);
    let theta = phantom.theta(&spec.times);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma / 2f64.sqrt()).expect("valid sigma");

    let mut samples = Vec::with_capacity(spec.times.len());
    for (i, (x, th)) in decay.echoes().iter().zip(theta.echoes()).enumerate() {
        let u = x.zip_map(th, |&m, &p| Complex64::from_polar(m, p));
        let mut per_coil = Vec::with_capacity(spec.coils.len());
        for op in &ops[i] {
            let mut y = op.forward(&u)?;
            if spec.noise_sigma > 0.0 {
                for (v, &m) in y.as_mut_slice().iter_mut().zip(op.mask()) {
                    if m {
                        *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    }
                }
            }
            per_coil.push(y);
        }
        samples.push(per_coil);
    }
    KSpaceData::new(samples, spec.patterns.clone(), spec.times.clone())
}

/// Keep the first `keep` echoes.
pub fn truncate_echoes(data: &KSpaceData, keep: usize) -> Result<KSpaceData> {
    data.truncated(keep)
}
