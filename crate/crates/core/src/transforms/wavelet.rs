//! Orthonormal Daubechies wavelets with periodized boundaries.

/// Reconstruction low-pass filters for Db1..Db8.
const DB_FILTERS: [&[f64]; 8] = [
    &[0.7071067811865476, 0.7071067811865476],
    &[
        0.48296291314453416,
        0.8365163037378079,
        0.2241438680420134,
        -0.12940952255126037,
    ],
    &[
        0.33267055295008263,
        0.8068915093110925,
        0.45987750211849154,
        -0.13501102001025458,
        -0.08544127388202666,
        0.03522629188570953,
    ],
    &[
        0.2303778133088965,
        0.7148465705529157,
        0.6308807679298589,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ],
    &[
        0.16010239797419293,
        0.6038292697971896,
        0.7243085284377729,
        0.13842814590132074,
        -0.24229488706638203,
        -0.032244869584638375,
        0.07757149384004572,
        -0.006241490212798274,
        -0.012580751999081999,
        0.0033357252854737712,
    ],
    &[
        0.11154074335010947,
        0.49462389039845306,
        0.7511339080210954,
        0.31525035170919763,
        -0.22626469396543983,
        -0.12976686756726194,
        0.09750160558732304,
        0.027522865530305727,
        -0.03158203931748603,
        0.0005538422011614961,
        0.004777257510945511,
        -0.0010773010853084796,
    ],
    &[
        0.07785205408500918,
        0.3965393194819173,
        0.7291320908462351,
        0.4697822874051931,
        -0.14390600392856498,
        -0.22403618499387498,
        0.07130921926683026,
        0.08061260915108308,
        -0.03802993693501441,
        -0.01657454163066688,
        0.01255099855609984,
        0.0004295779729213665,
        -0.0018016407040474908,
        0.00035371379997452024,
    ],
    &[
        0.05441584224310401,
        0.31287159091429995,
        0.6756307362972898,
        0.5853546836542067,
        -0.015829105256349306,
        -0.2840155429615469,
        0.0004724845739132828,
        0.12874742662047847,
        -0.017369301001807547,
        -0.044088253930794755,
        0.013981027917398282,
        0.008746094047405777,
        -0.004870352993451574,
        -0.00039174037337694705,
        0.0006754494064505693,
        -0.00011747678412476953,
    ],
];

/// Lines up to this half-length (plus filter overhang) use stack scratch space.
const STACK_SPAN: usize = 272;

#[derive(Clone, Debug, PartialEq)]
pub struct Daubechies {
    order: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Daubechies {
    /// `order` in 1..=8 (Db1 is Haar).
    pub fn new(order: usize) -> Option<Self> {
        let lo = DB_FILTERS.get(order.checked_sub(1)?)?.to_vec();
        let n = lo.len();
        let hi = (0..n)
            .map(|m| if m % 2 == 0 { lo[n - 1 - m] } else { -lo[n - 1 - m] })
            .collect();
        Some(Self { order, lo, hi })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn filter_len(&self) -> usize {
        self.lo.len()
    }

    /// One analysis level: `x` (even length n) -> approx in out[..n/2], detail in out[n/2..].
    pub fn analyze(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let half = n / 2;
        let l = self.lo.len();
        // even/odd phases of the periodic extension; each tap then updates all
        // outputs with a unit-stride loop
        let span = half + l / 2;
        let mut stack = [0.0; 2 * STACK_SPAN];
        let mut heap = Vec::new();
        let scratch: &mut [f64] = if span <= STACK_SPAN {
            &mut stack[..2 * span]
        } else {
            heap.resize(2 * span, 0.0);
            &mut heap
        };
        let (even, odd) = scratch.split_at_mut(span);
        for (j, pair) in x.chunks_exact(2).enumerate() {
            even[j] = pair[0];
            odd[j] = pair[1];
        }
        for j in half..span {
            even[j] = even[j - half];
            odd[j] = odd[j - half];
        }
        let (approx, detail) = out.split_at_mut(half);
        approx.iter_mut().for_each(|v| *v = 0.0);
        detail[..half].iter_mut().for_each(|v| *v = 0.0);
        for m in 0..l {
            let src = if m % 2 == 0 { &even[m / 2..m / 2 + half] } else { &odd[m / 2..m / 2 + half] };
            let (h, g) = (self.lo[m], self.hi[m]);
            for ((a, d), &v) in approx.iter_mut().zip(detail.iter_mut()).zip(src) {
                *a += h * v;
                *d += g * v;
            }
        }
    }

    /// Transpose (and inverse) of [`Daubechies::analyze`].
    pub fn synthesize(&self, c: &[f64], out: &mut [f64]) {
        let n = c.len();
        let half = n / 2;
        let l = self.lo.len();
        let span = half + l / 2;
        let mut stack = [0.0; 2 * STACK_SPAN];
        let mut heap = Vec::new();
        let scratch: &mut [f64] = if span <= STACK_SPAN {
            &mut stack[..2 * span]
        } else {
            heap.resize(2 * span, 0.0);
            &mut heap
        };
        let (even, odd) = scratch.split_at_mut(span);
        let (approx, detail) = c.split_at(half);
        for m in 0..l {
            let dst = if m % 2 == 0 { &mut even[m / 2..m / 2 + half] } else { &mut odd[m / 2..m / 2 + half] };
            let (h, g) = (self.lo[m], self.hi[m]);
            for ((o, &a), &d) in dst.iter_mut().zip(approx).zip(detail) {
                *o += h * a + g * d;
            }
        }
        for j in (half..span).rev() {
            even[j - half] += even[j];
            odd[j - half] += odd[j];
        }
        for (j, pair) in out[..n].chunks_exact_mut(2).enumerate() {
            pair[0] = even[j];
            pair[1] = odd[j];
        }
    }

    /// Multi-level 2-D decomposition in place, Mallat pyramid layout.
    pub fn forward_2d(&self, buf: &mut [f64], rows: usize, cols: usize, levels: usize) {
        let mut line = vec![0.0; rows.max(cols)];
        let mut out = vec![0.0; rows.max(cols)];
        let (mut h, mut w) = (rows, cols);
        for _ in 0..levels {
            for r in 0..h {
                let row = &mut buf[r * cols..r * cols + w];
                line[..w].copy_from_slice(row);
                self.analyze(&line[..w], &mut out[..w]);
                row.copy_from_slice(&out[..w]);
            }
            for c in 0..w {
                for r in 0..h {
                    line[r] = buf[r * cols + c];
                }
                self.analyze(&line[..h], &mut out[..h]);
                for r in 0..h {
                    buf[r * cols + c] = out[r];
                }
            }
            h /= 2;
            w /= 2;
        }
    }

    pub fn inverse_2d(&self, buf: &mut [f64], rows: usize, cols: usize, levels: usize) {
        let mut line = vec![0.0; rows.max(cols)];
        let mut out = vec![0.0; rows.max(cols)];
        for level in (0..levels).rev() {
            let h = rows >> level;
            let w = cols >> level;
            for c in 0..w {
                for r in 0..h {
                    line[r] = buf[r * cols + c];
                }
                self.synthesize(&line[..h], &mut out[..h]);
                for r in 0..h {
                    buf[r * cols + c] = out[r];
                }
            }
            for r in 0..h {
                let row = &mut buf[r * cols..r * cols + w];
                line[..w].copy_from_slice(row);
                self.synthesize(&line[..w], &mut out[..w]);
                row.copy_from_slice(&out[..w]);
            }
        }
    }
}
