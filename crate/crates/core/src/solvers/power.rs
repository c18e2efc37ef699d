use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest singular value of a linear operator on `len`-vectors, by power
/// iteration on `apply` (meant for self-adjoint operators such as `A^* A`).
/// The start vector is fixed so results are reproducible.
pub fn power_iteration_norm(
    mut apply: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    len: usize,
    iters: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    normalize(&mut v);
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let mut w = apply(&v);
        estimate = norm(&w);
        if estimate == 0.0 {
            return 0.0;
        }
        w.iter_mut().for_each(|x| *x /= estimate);
        v = w;
    }
    estimate
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
