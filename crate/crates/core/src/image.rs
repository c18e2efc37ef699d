//! Dense 2-D pixel containers and the elementary algebra shared by every stage
//! of the reconstruction.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense 2-D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type RealImage = Image<f64>;
pub type ComplexImage = Image<Complex64>;

impl<T: Clone> Image<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Image<U> {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U: Clone, V>(&self, other: &Image<U>, f: impl Fn(&T, &U) -> V) -> Image<V> {
        assert!(self.same_dims(other), "dimension mismatch");
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect(),
        }
    }
}

impl<T> Image<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_dims<U>(&self, other: &Image<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn check_dims<U>(&self, other: &Image<U>) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            })
        }
    }
}

impl<T> Index<(usize, usize)> for Image<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Image<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

impl RealImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_complex(&self) -> ComplexImage {
        self.map(|&v| Complex64::new(v, 0.0))
    }

    /// Ones where `pred` holds, zeros elsewhere.
    pub fn mask_where(&self, pred: impl Fn(f64) -> bool) -> RealImage {
        self.map(|&v| if pred(v) { 1.0 } else { 0.0 })
    }
}

impl ComplexImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn abs(&self) -> RealImage {
        self.map(|v| v.norm())
    }

    /// Hermitian inner product `<self, other> = sum conj(self) * other`.
    pub fn inner(&self, other: &ComplexImage) -> Complex64 {
        assert!(self.same_dims(other), "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Scalar kinds with a modulus, so max-difference works on real and complex grids alike.
pub trait Modulus: Copy {
    fn modulus_of_diff(self, other: Self) -> f64;
}

impl Modulus for f64 {
    fn modulus_of_diff(self, other: Self) -> f64 {
        (self - other).abs()
    }
}

impl Modulus for Complex64 {
    fn modulus_of_diff(self, other: Self) -> f64 {
        (self - other).norm()
    }
}

/// Largest entrywise absolute difference.
pub fn image_linf_diff<T: Modulus>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_dims(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .fold(0.0, |m, (x, y)| m.max(x.modulus_of_diff(*y))))
}

/// Mean over masked pixels of `|truth - estimate| / |truth|`.
pub fn masked_relative_error(truth: &RealImage, estimate: &RealImage, mask: &RealImage) -> Result<f64> {
    truth.check_dims(estimate)?;
    truth.check_dims(mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((&t, &e), &m) in truth.data.iter().zip(&estimate.data).zip(&mask.data) {
        if m == 0.0 {
            continue;
        }
        if m != 1.0 {
            return Err(Error::InvalidInput(format!("mask entry {m} is not 0 or 1")));
        }
        if t == 0.0 {
            return Err(Error::InvalidInput(
                "truth is zero on a masked pixel".to_string(),
            ));
        }
        sum += (t - e).abs() / t.abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("mask selects no pixels".to_string()));
    }
    Ok(sum / count as f64)
}

/// Echo times in milliseconds, strictly increasing, at least two.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoTimes(Vec<f64>);

impl EchoTimes {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least two echo times, got {}",
                times.len()
            )));
        }
        Self::validate(&times)?;
        Ok(Self(times))
    }

    /// Same as [`EchoTimes::new`] but accepts a single echo. Only for
    /// sampling/simulation paths where the fit is not run.
    pub fn new_unchecked_count(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInput("no echo times".to_string()));
        }
        Self::validate(&times)?;
        Ok(Self(times))
    }

    /// `count` echoes starting at `first` ms with uniform `spacing`.
    pub fn uniform(count: usize, first: f64, spacing: f64) -> Result<Self> {
        Self::new_unchecked_count((0..count).map(|i| first + spacing * i as f64).collect())
    }

    fn validate(times: &[f64]) -> Result<()> {
        if !(times[0] > 0.0) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("echo times must be positive and finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("echo times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn truncated(&self, keep: usize) -> Result<Self> {
        if keep < 2 || keep > self.0.len() {
            return Err(Error::InvalidInput(format!(
                "cannot keep {keep} of {} echoes (need 2..=E)",
                self.0.len()
            )));
        }
        Ok(Self(self.0[..keep].to_vec()))
    }
}

/// Per-echo images sharing one set of echo times.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiEchoSet<T> {
    echoes: Vec<Image<T>>,
    times: EchoTimes,
}

impl<T> MultiEchoSet<T> {
    pub fn new(echoes: Vec<Image<T>>, times: EchoTimes) -> Result<Self> {
        if echoes.len() != times.len() {
            return Err(Error::InvalidInput(format!(
                "{} echo images for {} echo times",
                echoes.len(),
                times.len()
            )));
        }
        if let Some(first) = echoes.first() {
            for e in &echoes[1..] {
                first.check_dims(e)?;
            }
        }
        Ok(Self { echoes, times })
    }

    pub fn echoes(&self) -> &[Image<T>] {
        &self.echoes
    }

    pub fn echoes_mut(&mut self) -> &mut [Image<T>] {
        &mut self.echoes
    }

    pub fn times(&self) -> &EchoTimes {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.echoes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.echoes.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.echoes[0].dims()
    }

    pub fn into_echoes(self) -> Vec<Image<T>> {
        self.echoes
    }

    pub fn truncated(&self, keep: usize) -> Result<Self>
    where
        T: Clone,
    {
        let times = self.times.truncated(keep)?;
        Ok(Self {
            echoes: self.echoes[..keep].to_vec(),
            times,
        })
    }
}

/// Receiver coil sensitivity maps.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSet {
    maps: Vec<ComplexImage>,
}

impl CoilSet {
    pub fn new(maps: Vec<ComplexImage>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidInput("need at least one coil".into()));
        }
        for m in &maps[1..] {
            maps[0].check_dims(m)?;
        }
        Ok(Self { maps })
    }

    /// A single coil with unit sensitivity everywhere.
    pub fn unit(rows: usize, cols: usize) -> Self {
        Self {
            maps: vec![ComplexImage::filled(rows, cols, Complex64::new(1.0, 0.0))],
        }
    }

    pub fn maps(&self) -> &[ComplexImage] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    pub fn root_sum_of_squares(&self) -> RealImage {
        let (rows, cols) = self.dims();
        let mut out = RealImage::zeros(rows, cols);
        for m in &self.maps {
            for (o, s) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *o += s.norm_sqr();
            }
        }
        out.map(|v| v.sqrt())
    }
}
