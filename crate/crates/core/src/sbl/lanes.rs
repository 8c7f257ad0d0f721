//! Per-snapshot kernels of the TL-SBL iteration, laid out so that four
//! snapshots are processed side by side.
//!
//! Every (grid point, snapshot) pair needs the powers `z⁰ … z^{N−1}` of its
//! phase factor. Running four snapshots of one grid point in lock-step gives
//! the compiler four independent recurrences to interleave and vectorize.

use rayon::prelude::*;

use crate::array::{SteeringBank, C64};

pub(super) const LANES: usize = 4;
type Lane = [f64; LANES];

/// Grid points per parallel work item.
const CHUNK: usize = 128;

/// Phase factors of a steering bank, grouped `[point][snapshot chunk][lane]`.
/// Padding lanes past the last snapshot hold `z = 0`.
pub(super) struct LanePhases {
    n: usize,
    len: usize,
    chunks: usize,
    zr: Vec<Lane>,
    zi: Vec<Lane>,
}

impl LanePhases {
    pub(super) fn from_bank(bank: &SteeringBank) -> Self {
        let (n, len) = (bank.num_sensors(), bank.snapshots());
        let chunks = len.div_ceil(LANES);
        let points = bank.points().len();
        let mut zr = vec![[0.0; LANES]; points * chunks];
        let mut zi = vec![[0.0; LANES]; points * chunks];
        for k in 0..points {
            for (l, z) in bank.phases(k).iter().enumerate() {
                zr[k * chunks + l / LANES][l % LANES] = z.re;
                zi[k * chunks + l / LANES][l % LANES] = z.im;
            }
        }
        LanePhases {
            n,
            len,
            chunks,
            zr,
            zi,
        }
    }

    pub(super) fn chunks(&self) -> usize {
        self.chunks
    }

    pub(super) fn num_sensors(&self) -> usize {
        self.n
    }

    /// Lag sums `r_l[d] = Σₖ γₖ z_{k,l}^d`, returned flat as `l·N + d`.
    pub(super) fn lag_sums(&self, gamma: &[f64]) -> Vec<C64> {
        let (n, chunks) = (self.n, self.chunks);
        let active: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k] > 0.0).collect();
        let width = chunks * n;
        // chunked partial sums reduced in order: independent of thread count
        let partials: Vec<(Vec<Lane>, Vec<Lane>)> = active
            .par_chunks(CHUNK)
            .map(|pts| {
                let mut ar = vec![[0.0; LANES]; width];
                let mut ai = vec![[0.0; LANES]; width];
                for &k in pts {
                    let g = gamma[k];
                    for c in 0..chunks {
                        let zr = self.zr[k * chunks + c];
                        let zi = self.zi[k * chunks + c];
                        let mut pr = [g; LANES];
                        let mut pi = [0.0; LANES];
                        for d in 0..n {
                            let (sr, si) = (&mut ar[c * n + d], &mut ai[c * n + d]);
                            for j in 0..LANES {
                                sr[j] += pr[j];
                                si[j] += pi[j];
                                let t = pr[j] * zr[j] - pi[j] * zi[j];
                                pi[j] = pr[j] * zi[j] + pi[j] * zr[j];
                                pr[j] = t;
                            }
                        }
                    }
                }
                (ar, ai)
            })
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); self.len * n];
        for (ar, ai) in partials {
            for l in 0..self.len {
                let (c, j) = (l / LANES, l % LANES);
                for d in 0..n {
                    out[l * n + d] += C64::new(ar[c * n + d][j], ai[c * n + d][j]);
                }
            }
        }
        out
    }

    /// `γₖ · Σₗ |aᴴ Σₗ⁻¹ yₗ|² / Σₗ aᴴ Σₗ⁻¹ a` for every point with `γₖ > 0`.
    pub(super) fn update(&self, gamma: &[f64], w: &WhitenedLanes) -> Vec<f64> {
        let (n, chunks) = (self.n, self.chunks);
        let mut out = vec![0.0; gamma.len()];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(b, slot)| {
            for (i, g_new) in slot.iter_mut().enumerate() {
                let k = b * CHUNK + i;
                let g = gamma[k];
                if g <= 0.0 {
                    continue;
                }
                let mut num = [0.0; LANES];
                let mut den = [0.0; LANES];
                for c in 0..chunks {
                    let zr = self.zr[k * chunks + c];
                    let zi = self.zi[k * chunks + c];
                    let mut pr = [1.0; LANES];
                    let mut pi = [0.0; LANES];
                    let mut nr = [0.0; LANES];
                    let mut ni = [0.0; LANES];
                    let mut dn = w.c0[c];
                    for d in 0..n {
                        let (wr, wi) = (w.wr[c * n + d], w.wi[c * n + d]);
                        for j in 0..LANES {
                            // conj(zᵈ)·w[d]
                            nr[j] += pr[j] * wr[j] + pi[j] * wi[j];
                            ni[j] += pr[j] * wi[j] - pi[j] * wr[j];
                        }
                        if d + 1 < n {
                            let (cr, ci) = (w.cr[c * n + d + 1], w.ci[c * n + d + 1]);
                            for j in 0..LANES {
                                let t = pr[j] * zr[j] - pi[j] * zi[j];
                                pi[j] = pr[j] * zi[j] + pi[j] * zr[j];
                                pr[j] = t;
                                // 2·Re(c[d+1]·z^{d+1})
                                dn[j] += 2.0 * (cr[j] * pr[j] - ci[j] * pi[j]);
                            }
                        }
                    }
                    for j in 0..LANES {
                        num[j] += nr[j] * nr[j] + ni[j] * ni[j];
                        den[j] += dn[j];
                    }
                }
                let num: f64 = num.iter().sum();
                let den: f64 = den.iter().sum();
                *g_new = g * num / den.max(f64::MIN_POSITIVE);
            }
        });
        out
    }
}

/// `Σₗ⁻¹ yₗ` and the diagonal sums `c_l[d]` of `Σₗ⁻¹` in lane layout
/// `[chunk][d][lane]`. Padding lanes are zero.
pub(super) struct WhitenedLanes {
    wr: Vec<Lane>,
    wi: Vec<Lane>,
    cr: Vec<Lane>,
    ci: Vec<Lane>,
    /// `c_l[0]`, real.
    c0: Vec<Lane>,
}

impl WhitenedLanes {
    pub(super) fn new(chunks: usize, n: usize) -> Self {
        WhitenedLanes {
            wr: vec![[0.0; LANES]; chunks * n],
            wi: vec![[0.0; LANES]; chunks * n],
            cr: vec![[0.0; LANES]; chunks * n],
            ci: vec![[0.0; LANES]; chunks * n],
            c0: vec![[0.0; LANES]; chunks],
        }
    }

    pub(super) fn set(&mut self, l: usize, solved: &[C64], diag_sums: &[C64]) {
        let n = solved.len();
        let (c, j) = (l / LANES, l % LANES);
        for d in 0..n {
            self.wr[c * n + d][j] = solved[d].re;
            self.wi[c * n + d][j] = solved[d].im;
            self.cr[c * n + d][j] = diag_sums[d].re;
            self.ci[c * n + d][j] = diag_sums[d].im;
        }
        self.c0[c][j] = diag_sums[0].re;
    }
}
