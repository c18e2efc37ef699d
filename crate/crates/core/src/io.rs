//! File formats: the k-space container, sampling-pattern files, map stacks
//! and 8-bit grayscale PGM export.
//!
//! Every format starts with a text header of `key value` lines. Patterns are
//! stored as one run-length line per row: alternating run lengths starting
//! with an unsampled run (which may be zero). The k-space container embeds
//! its patterns in the same notation and follows the header with
//! little-endian `f32` (re, im) pairs, echo-major then coil-minor.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, EchoTimes, RealImage};
use crate::kspace::KSpaceData;
use crate::sampling::{EchoPatternSet, PatternScheme, PoissonDiskParams, SamplingPattern};

pub const KSPACE_MAGIC: &str = "T2SKSPACE";
pub const PATTERN_MAGIC: &str = "T2SPATTERN";
pub const MAPS_MAGIC: &str = "T2SMAPS";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Line-oriented header reader over any buffered source.
struct Header<R> {
    inner: R,
    line: String,
}

impl<R: BufRead> Header<R> {
    fn new(inner: R) -> Self {
        Self { inner, line: String::new() }
    }

    fn next_line(&mut self) -> Result<&str> {
        self.line.clear();
        let n = self
            .inner
            .read_line(&mut self.line)
            .map_err(|e| format_err(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(format_err("unexpected end of header"));
        }
        Ok(self.line.trim_end_matches(['\n', '\r']))
    }

    /// Read `key rest` and return `rest`.
    fn field(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            _ if line == key => Ok(String::new()),
            _ => Err(format_err(format!("expected '{key}', found '{line}'"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| format_err(format!("bad value '{v}' for '{key}'")))
    }

    fn magic(&mut self, magic: &str) -> Result<()> {
        let line = self.next_line()?.to_string();
        let (m, v) = line
            .split_once(' ')
            .ok_or_else(|| format_err(format!("missing magic '{magic}'")))?;
        if m != magic {
            return Err(format_err(format!("bad magic '{m}', expected '{magic}'")));
        }
        let version: u32 = v.parse().map_err(|_| format_err(format!("bad version '{v}'")))?;
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        Ok(())
    }
}

fn rle_row(row: &[bool]) -> String {
    let mut runs = Vec::new();
    let mut state = false;
    let mut len = 0usize;
    for &b in row {
        if b == state {
            len += 1;
        } else {
            runs.push(len);
            state = b;
            len = 1;
        }
    }
    runs.push(len);
    runs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_rle_row(line: &str, cols: usize) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(cols);
    let mut state = false;
    for tok in line.split_whitespace() {
        let n: usize = tok.parse().map_err(|_| format_err(format!("bad run length '{tok}'")))?;
        if out.len() + n > cols {
            return Err(format_err("run lengths exceed row width"));
        }
        out.extend(std::iter::repeat(state).take(n));
        state = !state;
    }
    if out.len() != cols {
        return Err(format_err(format!("row has {} entries, expected {cols}", out.len())));
    }
    Ok(out)
}

fn write_pattern_body(w: &mut impl Write, p: &SamplingPattern) -> std::io::Result<()> {
    writeln!(w, "rows {}", p.rows())?;
    writeln!(w, "cols {}", p.cols())?;
    writeln!(w, "rate {}", p.target_rate())?;
    writeln!(w, "d_min {}", p.d_min())?;
    writeln!(w, "calib_radius {}", p.calib_radius())?;
    writeln!(w, "seed {}", p.seed())?;
    for row in p.mask().chunks(p.cols()) {
        writeln!(w, "{}", rle_row(row))?;
    }
    Ok(())
}

fn read_pattern_body<R: BufRead>(h: &mut Header<R>) -> Result<SamplingPattern> {
    let rows: usize = h.parsed("rows")?;
    let cols: usize = h.parsed("cols")?;
    let target_rate: f64 = h.parsed("rate")?;
    let d_min: f64 = h.parsed("d_min")?;
    let calib_radius: usize = h.parsed("calib_radius")?;
    let seed: u64 = h.parsed("seed")?;
    if rows == 0 || cols == 0 {
        return Err(format_err("pattern dimensions must be positive"));
    }
    let mut mask = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = h.next_line()?.to_string();
        mask.extend(parse_rle_row(&line, cols)?);
    }
    SamplingPattern::from_parts(
        PoissonDiskParams {
            rows,
            cols,
            target_rate,
            d_min,
            calib_radius,
            seed,
        },
        mask,
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn write_pattern(w: &mut impl Write, p: &SamplingPattern) -> std::io::Result<()> {
    writeln!(w, "{PATTERN_MAGIC} {FORMAT_VERSION}")?;
    write_pattern_body(w, p)
}

pub fn read_pattern(r: impl BufRead) -> Result<SamplingPattern> {
    let mut h = Header::new(r);
    h.magic(PATTERN_MAGIC)?;
    read_pattern_body(&mut h)
}

pub fn save_pattern(path: impl AsRef<Path>, p: &SamplingPattern) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_pattern(&mut w, p).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_pattern(path: impl AsRef<Path>) -> Result<SamplingPattern> {
    read_pattern(open(path.as_ref())?)
}

/// Write the container. Samples are narrowed to `f32`.
pub fn write_kspace(w: &mut impl Write, data: &KSpaceData) -> std::io::Result<()> {
    let (rows, cols) = data.dims();
    writeln!(w, "{KSPACE_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "rows {rows}")?;
    writeln!(w, "cols {cols}")?;
    writeln!(w, "echoes {}", data.echoes())?;
    writeln!(w, "coils {}", data.coils())?;
    let times: Vec<String> = data.times().as_slice().iter().map(|t| t.to_string()).collect();
    writeln!(w, "times {}", times.join(" "))?;
    writeln!(w, "scheme {}", data.patterns().scheme().name())?;
    writeln!(w, "endianness little")?;
    for (i, p) in data.patterns().patterns().iter().enumerate() {
        writeln!(w, "pattern {i}")?;
        write_pattern_body(w, p)?;
    }
    writeln!(w, "data f32")?;
    let mut buf = Vec::with_capacity(rows * cols * 8);
    for plane in data.samples().iter().flatten() {
        buf.clear();
        for v in plane.as_slice() {
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_kspace(r: impl BufRead) -> Result<KSpaceData> {
    let mut h = Header::new(r);
    h.magic(KSPACE_MAGIC)?;
    let rows: usize = h.parsed("rows")?;
    let cols: usize = h.parsed("cols")?;
    let echoes: usize = h.parsed("echoes")?;
    let coils: usize = h.parsed("coils")?;
    let times = h
        .field("times")?
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format_err(format!("bad echo time '{t}'"))))
        .collect::<Result<Vec<_>>>()?;
    if times.len() != echoes {
        return Err(format_err(format!("{} echo times for {echoes} echoes", times.len())));
    }
    let scheme: PatternScheme = h.field("scheme")?.parse().map_err(|_| format_err("bad scheme"))?;
    let endian = h.field("endianness")?;
    if endian != "little" {
        return Err(format_err(format!("unsupported endianness '{endian}'")));
    }
    let mut patterns = Vec::with_capacity(echoes);
    for i in 0..echoes {
        let idx: usize = h.parsed("pattern")?;
        if idx != i {
            return Err(format_err(format!("pattern {idx} out of order")));
        }
        let p = read_pattern_body(&mut h)?;
        if p.dims() != (rows, cols) {
            return Err(format_err("pattern dimensions differ from header"));
        }
        patterns.push(p);
    }
    let kind = h.field("data")?;
    if kind != "f32" {
        return Err(format_err(format!("unsupported sample type '{kind}'")));
    }

    let plane_bytes = rows * cols * 8;
    let mut payload = Vec::with_capacity(plane_bytes * echoes * coils);
    h.inner
        .read_to_end(&mut payload)
        .map_err(|e| format_err(format!("read failed: {e}")))?;
    let expected = plane_bytes * echoes * coils;
    if payload.len() != expected {
        return Err(format_err(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    let mut planes = payload.chunks_exact(plane_bytes).map(|chunk| {
        let v: Vec<Complex64> = chunk
            .chunks_exact(8)
            .map(|c| Complex64::new(f(&c[..4]), f(&c[4..])))
            .collect();
        ComplexImage::from_vec(rows, cols, v)
    });
    let mut samples = Vec::with_capacity(echoes);
    for _ in 0..echoes {
        samples.push((0..coils).map(|_| planes.next().expect("length checked")).collect::<Result<Vec<_>>>()?);
    }
    let times = EchoTimes::new_unchecked_count(times)?;
    KSpaceData::new(samples, EchoPatternSet::new(patterns, scheme)?, times)
}

pub fn save_kspace(path: impl AsRef<Path>, data: &KSpaceData) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_kspace(&mut w, data).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_kspace(path: impl AsRef<Path>) -> Result<KSpaceData> {
    read_kspace(open(path.as_ref())?)
}

/// Named real maps of equal size, stored as `f64` little endian.
#[derive(Clone, Debug, PartialEq)]
pub struct MapStack {
    pub names: Vec<String>,
    pub maps: Vec<RealImage>,
}

impl MapStack {
    pub fn new(entries: Vec<(String, RealImage)>) -> Result<Self> {
        let (names, maps): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        if maps.is_empty() {
            return Err(Error::InvalidInput("map stack needs at least one map".into()));
        }
        for m in &maps[1..] {
            maps[0].check_dims(m)?;
        }
        if names.iter().any(|n| n.is_empty() || n.contains(char::is_whitespace)) {
            return Err(Error::InvalidInput("map names must be nonempty and free of whitespace".into()));
        }
        Ok(Self { names, maps })
    }

    pub fn get(&self, name: &str) -> Option<&RealImage> {
        self.names.iter().position(|n| n == name).map(|i| &self.maps[i])
    }
}

pub fn write_maps(w: &mut impl Write, stack: &MapStack) -> std::io::Result<()> {
    let (rows, cols) = stack.maps[0].dims();
    writeln!(w, "{MAPS_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "rows {rows}")?;
    writeln!(w, "cols {cols}")?;
    writeln!(w, "names {}", stack.names.join(" "))?;
    writeln!(w, "data f64")?;
    for m in &stack.maps {
        let bytes: Vec<u8> = m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_maps(r: impl BufRead) -> Result<MapStack> {
    let mut h = Header::new(r);
    h.magic(MAPS_MAGIC)?;
    let rows: usize = h.parsed("rows")?;
    let cols: usize = h.parsed("cols")?;
    let names: Vec<String> = h.field("names")?.split_whitespace().map(String::from).collect();
    if h.field("data")? != "f64" {
        return Err(format_err("unsupported map sample type"));
    }
    let mut payload = Vec::new();
    h.inner
        .read_to_end(&mut payload)
        .map_err(|e| format_err(format!("read failed: {e}")))?;
    let plane = rows * cols * 8;
    if names.is_empty() || payload.len() != plane * names.len() {
        return Err(format_err(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            plane * names.len()
        )));
    }
    let maps = payload
        .chunks_exact(plane)
        .map(|chunk| {
            let v = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            RealImage::from_vec(rows, cols, v)
        })
        .collect::<Result<Vec<_>>>()?;
    MapStack::new(names.into_iter().zip(maps).collect())
}

pub fn save_maps(path: impl AsRef<Path>, stack: &MapStack) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_maps(&mut w, stack).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_maps(path: impl AsRef<Path>) -> Result<MapStack> {
    read_maps(open(path.as_ref())?)
}

/// Binary PGM (P5) bytes with `lo` mapped to 0 and `hi` to 255.
pub fn encode_pgm(img: &RealImage, window: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("window [{lo}, {hi}] must satisfy lo < hi")));
    }
    let (rows, cols) = img.dims();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    let scale = 255.0 / (hi - lo);
    out.extend(img.as_slice().iter().map(|&v| {
        let g = ((v - lo) * scale).round();
        if g.is_nan() {
            0
        } else {
            g.clamp(0.0, 255.0) as u8
        }
    }));
    Ok(out)
}

pub fn export_map_image(img: &RealImage, path: impl AsRef<Path>, window: (f64, f64)) -> Result<()> {
    let bytes = encode_pgm(img, window)?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `(min, max)` of the finite entries under a 0/1 mask, for windowing.
pub fn data_window(img: &RealImage, mask: Option<&RealImage>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &v) in img.as_slice().iter().enumerate() {
        if mask.map_or(true, |m| m.as_slice()[i] > 0.0) && v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo < hi) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 0.5, c + 0.5);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        for row in [
            vec![],
            vec![true],
            vec![false, false],
            vec![true, true, false, true, false, false],
        ] {
            let line = rle_row(&row);
            if row.is_empty() {
                assert_eq!(line, "0");
            } else {
                assert_eq!(parse_rle_row(&line, row.len()).unwrap(), row);
            }
        }
        assert!(parse_rle_row("2 5", 4).is_err());
        assert!(parse_rle_row("1 1", 4).is_err());
    }

    #[test]
    fn pgm_window() {
        let img = RealImage::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let bytes = encode_pgm(&img, (0.0, 5.0)).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 51, 102, 153, 204, 255]);
        assert!(encode_pgm(&img, (1.0, 1.0)).is_err());
        let flat = RealImage::from_fn(2, 2, |_, _| 0.5);
        let g = encode_pgm(&flat, (0.0, 1.0)).unwrap();
        assert!(g[g.len() - 4..].iter().all(|&b| b == 128));
    }

    #[test]
    fn map_stack_rejects_bad_names() {
        let m = RealImage::zeros(2, 2);
        assert!(MapStack::new(vec![("a b".into(), m.clone())]).is_err());
        assert!(MapStack::new(vec![]).is_err());
        assert!(MapStack::new(vec![("a".into(), m), ("b".into(), RealImage::zeros(3, 2))]).is_err());
    }
}
