//! Property tests for transforms, sampling and file formats.

use num_complex::Complex64;
use proptest::prelude::*;
use t2star_core::image::{ComplexImage, RealImage};
use t2star_core::io::{encode_pgm, read_kspace, read_maps, read_pattern, write_kspace, write_maps, write_pattern, MapStack};
use t2star_core::phantom::{make_phantom, simulate_kspace, synth_coils, AcquisitionSpec, PhantomPreset};
use t2star_core::sampling::{make_echo_patterns, poisson_disk_relaxed, PatternScheme, PoissonDiskParams, SamplingPattern};
use t2star_core::transforms::{SamplingOperator, WaveletFrame};
use t2star_core::{EchoTimes, Error};

fn real_image(rows: usize, cols: usize) -> impl Strategy<Value = RealImage> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| RealImage::from_vec(rows, cols, v).unwrap())
}

fn complex_image(rows: usize, cols: usize) -> impl Strategy<Value = ComplexImage> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(move |v| {
        ComplexImage::from_vec(rows, cols, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
    })
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (3usize..20, 3usize..20)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frame_is_parseval((img, levels) in dims().prop_flat_map(|(r, c)| (real_image(r, c), 1usize..4))) {
        let frame = WaveletFrame::sparsity_averaging(img.rows(), img.cols(), levels);
        let w = frame.forward(&img).unwrap();
        let energy = dot(&w, &w).sqrt();
        prop_assert!((energy - img.norm()).abs() <= 1e-9 * img.norm().max(1.0));
        let back = frame.adjoint(&w).unwrap();
        let err: f64 = back.as_slice().iter().zip(img.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9 * img.max_abs().max(1.0));
    }

    #[test]
    fn frame_adjoint_identity((x, seed) in (4usize..17, 4usize..17).prop_flat_map(|(r, c)| (real_image(r, c), any::<u64>()))) {
        let frame = WaveletFrame::sparsity_averaging(x.rows(), x.cols(), 2);
        let mut state = seed;
        let w: Vec<f64> = (0..frame.coeff_len()).map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }).collect();
        let lhs = dot(&frame.forward(&x).unwrap(), &w);
        let rhs = dot(x.as_slice(), frame.adjoint(&w).unwrap().as_slice());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn sampling_operator_adjoint(
        (u, y, coil, mask) in dims().prop_flat_map(|(r, c)| (
            complex_image(r, c),
            complex_image(r, c),
            complex_image(r, c),
            prop::collection::vec(any::<bool>(), r * c),
        ))
    ) {
        let pattern = SamplingPattern::from_mask(u.rows(), u.cols(), mask).unwrap();
        let op = SamplingOperator::new(&pattern, &coil).unwrap();
        let lhs = op.forward(&u).unwrap().inner(&y);
        let rhs = u.inner(&op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn poisson_patterns_respect_their_distance(
        rate in 0.05f64..0.5,
        d_min in 1.0f64..2.5,
        calib in 0usize..4,
        seed in any::<u64>(),
    ) {
        let p = poisson_disk_relaxed(PoissonDiskParams { rows: 32, cols: 32, target_rate: rate, d_min, calib_radius: calib, seed }).unwrap();
        prop_assert!(p.d_min() <= d_min);
        prop_assert!((p.rate() - rate).abs() <= 0.1 * rate + 1.0 / 1024.0);
        let points: Vec<(usize, usize)> = (0..32)
            .flat_map(|r| (0..32).map(move |c| (r, c)))
            .filter(|&(r, c)| p.is_sampled(r, c) && !p.in_calibration(r, c))
            .collect();
        let limit = p.d_min() * p.d_min() - 1e-9;
        for (i, &(r1, c1)) in points.iter().enumerate() {
            for &(r2, c2) in &points[i + 1..] {
                let d2 = (r1 as f64 - r2 as f64).powi(2) + (c1 as f64 - c2 as f64).powi(2);
                prop_assert!(d2 >= limit, "({r1},{c1}) and ({r2},{c2}) closer than {}", p.d_min());
            }
        }
        for r in 0..32 {
            for c in 0..32 {
                if p.in_calibration(r, c) {
                    prop_assert!(p.is_sampled(r, c));
                }
            }
        }
    }

    #[test]
    fn pattern_round_trip(
        (rows, cols, mask) in (1usize..40, 1usize..40).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(any::<bool>(), r * c)))
    ) {
        let p = SamplingPattern::from_mask(rows, cols, mask).unwrap();
        let mut buf = Vec::new();
        write_pattern(&mut buf, &p).unwrap();
        prop_assert_eq!(read_pattern(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn maps_round_trip(a in real_image(5, 7), b in real_image(5, 7)) {
        let stack = MapStack::new(vec![("r2star".into(), a), ("x0".into(), b)]).unwrap();
        let mut buf = Vec::new();
        write_maps(&mut buf, &stack).unwrap();
        prop_assert_eq!(read_maps(buf.as_slice()).unwrap(), stack);
    }
}

fn small_kspace(scheme: PatternScheme) -> t2star_core::KSpaceData {
    let phantom = make_phantom(16, 16, PhantomPreset::SheppLike, 3);
    let times = EchoTimes::uniform(3, 7.64, 5.41).unwrap();
    let patterns = make_echo_patterns(
        3,
        scheme,
        PoissonDiskParams { rows: 16, cols: 16, target_rate: 0.3, d_min: 1.0, calib_radius: 2, seed: 4 },
    )
    .unwrap();
    let spec = AcquisitionSpec { times, coils: synth_coils(16, 16, 2).unwrap(), patterns, noise_sigma: 0.01 };
    simulate_kspace(&phantom, &spec, 8).unwrap()
}

#[test]
fn kspace_round_trip_is_f32_exact() {
    for scheme in [PatternScheme::Fixed, PatternScheme::Complementary] {
        let data = small_kspace(scheme);
        let mut buf = Vec::new();
        write_kspace(&mut buf, &data).unwrap();
        let back = read_kspace(buf.as_slice()).unwrap();
        assert_eq!(back.patterns(), data.patterns());
        assert_eq!(back.times(), data.times());
        for (pa, pb) in data.samples().iter().flatten().zip(back.samples().iter().flatten()) {
            for (a, b) in pa.as_slice().iter().zip(pb.as_slice()) {
                assert_eq!(b.re, a.re as f32 as f64);
                assert_eq!(b.im, a.im as f32 as f64);
            }
        }
        // a second trip is lossless
        let mut again = Vec::new();
        write_kspace(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }
}

#[test]
fn kspace_reader_rejects_damage() {
    let data = small_kspace(PatternScheme::Fixed);
    let mut buf = Vec::new();
    write_kspace(&mut buf, &data).unwrap();

    let mut bad_magic = buf.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_kspace(bad_magic.as_slice()), Err(Error::Format(_))));

    let text = String::from_utf8_lossy(&buf[..64]).into_owned();
    let bad_version = text.replacen("T2SKSPACE 1", "T2SKSPACE 9", 1);
    let mut v = bad_version.into_bytes();
    v.extend_from_slice(&buf[64..]);
    assert!(matches!(read_kspace(v.as_slice()), Err(Error::Format(_))));

    assert!(matches!(read_kspace(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    let mut extra = buf.clone();
    extra.extend_from_slice(&[0; 8]);
    assert!(matches!(read_kspace(extra.as_slice()), Err(Error::Format(_))));
    assert!(read_kspace(&buf[..20]).is_err());
}

#[test]
fn empty_pattern_round_trips() {
    let p = SamplingPattern::from_mask(6, 5, vec![false; 30]).unwrap();
    let mut buf = Vec::new();
    write_pattern(&mut buf, &p).unwrap();
    let back = read_pattern(buf.as_slice()).unwrap();
    assert_eq!(back.count(), 0);
    assert_eq!(back, p);
}

#[test]
fn pgm_matches_golden_bytes() {
    let img = RealImage::from_vec(2, 3, vec![0.0, 0.5, 1.0, -1.0, 2.0, f64::NAN]).unwrap();
    let bytes = encode_pgm(&img, (0.0, 1.0)).unwrap();
    let mut golden = b"P5\n3 2\n255\n".to_vec();
    golden.extend_from_slice(&[0, 128, 255, 0, 255, 0]);
    assert_eq!(bytes, golden);
    assert!(encode_pgm(&img, (1.0, 1.0)).is_err());
}
