//! Eigenvalues of the null covariance operator for the Cauchy weight on
//! `[0,1]^D`.
//!
//! Under the Fourier basis the operator splits into a cosine block `A1`
//! (a rank-one downdate of a diagonal), a sine block `A2` (a rank-one
//! update), and the boundary-corrected block `S`, which is the Kronecker
//! power of `A1` with its first row and column removed. Eigenvalues of `A1`
//! and `A2` are `2 rho / (tau^2 + rho^2)` for roots `tau` of two
//! transcendental equations with guaranteed bracketing; eigenvalues of `S`
//! interlace the sorted Kronecker products and solve a secular equation
//! handled by an iterated quadratic approximation with analytic series
//! remainders.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::null_moments::{alpha, limiting_variance, null_mean};

/// Roots per one-dimensional family used when the caller has no opinion.
pub const DEFAULT_J: usize = 1000;

/// Gaps solved by the secular iteration before switching to the
/// lower-endpoint replacement that the interlacing bound justifies.
const SECULAR_DETAIL_CAP: usize = 4_000;

/// Keep every eigenvalue above this fraction of the largest.
const KEEP_FRACTION: f64 = 1e-8;

/// Required coverage of the analytic eigenvalue sum by stored entries.
const MASS_TARGET: f64 = 0.999;

// ---------------------------------------------------------------------------
// One-dimensional roots
// ---------------------------------------------------------------------------

/// Solve `f = 0` for the A1 family: `f(tau) = tau sin(tau/2) - rho cos(tau/2)`
/// with one root per `((2k-2) pi, (2k-1) pi)`.
fn f_a1(rho: f64, tau: f64) -> (f64, f64, f64) {
    let (s, c) = (0.5 * tau).sin_cos();
    let f = tau * s - rho * c;
    let fp = s * (1.0 + 0.5 * rho) + 0.5 * tau * c;
    let fpp = 0.5 * c * (2.0 + 0.5 * rho) - 0.25 * tau * s;
    (f, fp, fpp)
}

/// A2 family: `f(tau) = rho sin(tau/2) + tau cos(tau/2)`,
/// roots in `((2k-1) pi, 2k pi)`.
fn f_a2(rho: f64, tau: f64) -> (f64, f64, f64) {
    let (s, c) = (0.5 * tau).sin_cos();
    let f = rho * s + tau * c;
    let fp = c * (1.0 + 0.5 * rho) - 0.5 * tau * s;
    let fpp = -0.5 * s * (2.0 + 0.5 * rho) - 0.25 * tau * c;
    (f, fp, fpp)
}

/// Halley iteration safeguarded by bisection on a bracket with a sign change.
fn halley_bisect<F: Fn(f64) -> (f64, f64, f64)>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let (fa, _, _) = f(a);
    let mut sign_a = fa.is_sign_positive();
    let mut x = 0.5 * (a + b);
    for _ in 0..100 {
        let (fx, fpx, fppx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx.is_sign_positive() == sign_a {
            a = x;
        } else {
            b = x;
        }
        let denom = 2.0 * fpx * fpx - fx * fppx;
        let step = if denom != 0.0 { 2.0 * fx * fpx / denom } else { f64::INFINITY };
        let mut next = x - step;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 1e-13 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
        // re-resolve the sign bookkeeping if bisection shrank the bracket
        if a >= b {
            return 0.5 * (a + b);
        }
        let (fa2, _, _) = f(a);
        sign_a = fa2.is_sign_positive();
    }
    x
}

/// Roots `tau_k` of the A1 equation for `k = 1..=j`.
pub fn roots_a1(rho: f64, j: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    (1..=j)
        .map(|k| {
            let lo = (2 * k - 2) as f64 * pi;
            let hi = (2 * k - 1) as f64 * pi;
            // endpoints carry known signs, nudge inward only by bracket math
            halley_bisect(&|t| f_a1(rho, t), lo, hi)
        })
        .collect()
}

/// Roots `tau_k` of the A2 equation for `k = 1..=j`.
pub fn roots_a2(rho: f64, j: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    (1..=j)
        .map(|k| {
            let lo = (2 * k - 1) as f64 * pi;
            let hi = (2 * k) as f64 * pi;
            halley_bisect(&|t| f_a2(rho, t), lo, hi)
        })
        .collect()
}

fn lambda_of_tau(rho: f64, tau: f64) -> f64 {
    2.0 * rho / (tau * tau + rho * rho)
}

/// One-dimensional spectra of the two diagonal blocks, with the secular
/// weights of the A1 eigenvectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneDimSpectra {
    pub rho: f64,
    pub j: usize,
    pub tau_a1: Vec<f64>,
    pub tau_a2: Vec<f64>,
    pub lambda_a1: Vec<f64>,
    pub lambda_a2: Vec<f64>,
    /// squared first-coordinate weights `zeta'^2_k = 4 alpha rho lambda_k /
    /// (tau_k^2 (lambda_k + 1))`, with `2 - lambda rho` absorbed as
    /// `2 tau^2 / (tau^2 + rho^2)` to avoid cancellation
    pub zeta_sq: Vec<f64>,
}

impl OneDimSpectra {
    pub fn compute(rho: f64, j: usize) -> Self {
        let tau_a1 = roots_a1(rho, j);
        let tau_a2 = roots_a2(rho, j);
        let lambda_a1: Vec<f64> = tau_a1.iter().map(|&t| lambda_of_tau(rho, t)).collect();
        let lambda_a2: Vec<f64> = tau_a2.iter().map(|&t| lambda_of_tau(rho, t)).collect();
        let a = alpha(rho);
        let zeta_sq: Vec<f64> = tau_a1
            .iter()
            .zip(&lambda_a1)
            .map(|(&t, &l)| 4.0 * a * rho * l / (t * t * (l + 1.0)))
            .collect();
        OneDimSpectra { rho, j, tau_a1, tau_a2, lambda_a1, lambda_a2, zeta_sq }
    }
}

// ---------------------------------------------------------------------------
// Closed-form G moments and (A1^m)_{11}
// ---------------------------------------------------------------------------

/// zeta(2k) for 2k = 4..=22, used by the small-rho series of the G moments.
const ZETA_EVEN: [f64; 10] = [
    1.082_323_233_711_138_2,     // zeta(4)
    1.017_343_061_984_449_1,     // zeta(6)
    1.004_077_356_197_944_3,     // zeta(8)
    1.000_994_575_127_818_1,     // zeta(10)
    1.000_246_086_553_308_0,     // zeta(12)
    1.000_061_248_135_058_7,     // zeta(14)
    1.000_015_282_259_408_6,     // zeta(16)
    1.000_003_817_293_265_0,     // zeta(18)
    1.000_000_953_962_033_9,     // zeta(20)
    1.000_000_238_450_502_7,     // zeta(22)
];

fn zeta_even(two_k: usize) -> f64 {
    if two_k <= 22 {
        ZETA_EVEN[(two_k - 4) / 2]
    } else {
        // zeta(s) = 1 + 2^-s + 3^-s + O(4^-s); ample for s >= 24
        1.0 + (2.0f64).powi(-(two_k as i32)) + (3.0f64).powi(-(two_k as i32))
    }
}

/// `G_m = sum_j u_j^m` by binomial series in `(rho / 2 pi)^2`; used below
/// rho = 3 where the hyperbolic closed forms cancel badly.
fn g_series(rho: f64, m: usize) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let x = (rho / two_pi) * (rho / two_pi);
    let mut sum = 0.0;
    let mut binom = 1.0; // C(m+i-1, i)
    let mut xpow = 1.0;
    for i in 0..200 {
        let term = binom * xpow * zeta_even(2 * m + 2 * i);
        sum += if i % 2 == 0 { term } else { -term };
        if term < 1e-17 * sum.abs() && i > 2 {
            break;
        }
        binom *= (m + i) as f64 / (i + 1) as f64;
        xpow *= x;
    }
    // prefactor (2 rho)^m / (2 pi)^{2m}
    (rho / (std::f64::consts::PI * std::f64::consts::PI * 2.0)).powi(m as i32) * sum
}

/// `sech(x)` without overflow.
fn sech(x: f64) -> f64 {
    let e = (-x).exp();
    2.0 * e / (1.0 + e * e)
}

/// Closed forms of `G_1..G_5`, rewritten in `z = e^{-rho}` so they neither
/// overflow nor cancel for large rho.
fn g_closed(rho: f64) -> [f64; 5] {
    let z = (-rho).exp();
    let sech_r = sech(rho);
    let tanh_r = rho.tanh();
    let one_mz = -(-rho).exp_m1(); // 1 - z

    // G1 = coth(rho/2)/2 - 1/rho
    let coth_half = (1.0 + z) / one_mz;
    let g1 = 0.5 * coth_half - 1.0 / rho;

    // G2 = (rho^2 + rho sinh - 4 cosh + 4) / (2 rho^2 (cosh - 1))
    let g2 = (rho * rho * sech_r + rho * tanh_r - 4.0 + 4.0 * sech_r)
        / (2.0 * rho * rho * (1.0 - sech_r));

    // G3 = (rho^3 coth(rho/2) + 3 rho^2 + 3 rho sinh - 16 cosh + 16)
    //      / (4 rho^3 (cosh - 1))
    let g3 = (rho.powi(3) * coth_half * sech_r + 3.0 * rho * rho * sech_r + 3.0 * rho * tanh_r
        - 16.0
        + 16.0 * sech_r)
        / (4.0 * rho.powi(3) * (1.0 - sech_r));

    // G4 in powers of z (the e^{2 rho} prefactor absorbed)
    let r2 = rho * rho;
    let r3 = r2 * rho;
    let r4 = r2 * r2;
    let c0 = 15.0 * rho / 4.0 - 24.0;
    let c1 = (r4 + 6.0 * r3 + 15.0 * r2 - 15.0 * rho + 192.0) / 2.0;
    let c2 = 2.0 * r4 - 15.0 * r2 - 144.0;
    let c3 = (r4 - 6.0 * r3 + 15.0 * r2 + 15.0 * rho + 192.0) / 2.0;
    let c4 = -15.0 * rho / 4.0 - 24.0;
    let g4 = (c0 + z * (c1 + z * (c2 + z * (c3 + z * c4)))) / (3.0 * r4 * one_mz.powi(4));

    // G5 in powers of z
    let t1 = 5.0 * rho * one_mz * z * ((2.0 * r2 + 21.0) * (1.0 + z * z) + 2.0 * z * (4.0 * r2 - 21.0));
    let t2 = (22.0 * r4 - 90.0 * r2 + 210.0) * (1.0 + z) * z * z / 2.0;
    let t3 = (2.0 * r4 + 90.0 * r2 - 315.0) * (1.0 + z * z * z) * z / 2.0;
    let t4 = 105.0 * (1.0 + z.powi(5)) / 2.0;
    let g5 = -16.0 / rho.powi(5) + (t1 + t2 + t3 + t4) / (24.0 * r4 * one_mz.powi(5));

    [g1, g2, g3, g4, g5]
}

fn g1_series(rho: f64) -> f64 {
    rho / 12.0 - rho.powi(3) / 720.0 + rho.powi(5) / 30240.0 - rho.powi(7) / 1_209_600.0
}

/// Moment machinery of the A1 block: `G_1..G_5` and `(A1^m)_{11}` for
/// `m = 0..=5`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GMoments {
    pub rho: f64,
    pub g: [f64; 5],
    pub a1_pow_11: [f64; 6],
}

pub fn g_moments(rho: f64) -> GMoments {
    // G1's closed form only cancels near zero; the higher moments lose
    // precision in a wider band, where the zeta series converges fast
    let closed = g_closed(rho);
    let g = [
        if rho < 0.1 { g1_series(rho) } else { closed[0] },
        if rho < 3.0 { g_series(rho, 2) } else { closed[1] },
        if rho < 3.0 { g_series(rho, 3) } else { closed[2] },
        if rho < 3.0 { g_series(rho, 4) } else { closed[3] },
        if rho < 3.0 { g_series(rho, 5) } else { closed[4] },
    ];
    let [_, g2, g3, g4, g5] = g;
    let a = alpha(rho);
    let gm = -(-rho).exp_m1(); // gamma = 1 - e^{-rho}
    let b2 = 2.0 * gm * gm / (rho * rho); // beta^2
    let m0 = 1.0;
    let m1 = a;
    let m2 = a * a + b2 * g2;
    let m3 = a.powi(3) + 2.0 * a * b2 * g2 - b2 * gm * g2 * g2 + b2 * g3;
    let m4 = a.powi(4) + 3.0 * a * a * b2 * g2 - 2.0 * a * b2 * gm * g2 * g2
        + 2.0 * a * b2 * g3
        + b2 * b2 * g2 * g2
        + b2 * gm * gm * g2.powi(3)
        - 2.0 * b2 * gm * g2 * g3
        + b2 * g4;
    let m5 = a.powi(5) + 4.0 * a.powi(3) * b2 * g2 - 3.0 * a * a * b2 * gm * g2 * g2
        + 3.0 * a * b2 * b2 * g2 * g2
        + 2.0 * a * b2 * gm * gm * g2.powi(3)
        - 2.0 * b2 * b2 * gm * g2.powi(3)
        + 3.0 * a * a * b2 * g3
        - 4.0 * a * b2 * gm * g2 * g3
        + 2.0 * b2 * b2 * g2 * g3
        - b2 * gm.powi(3) * g2.powi(4)
        + 3.0 * b2 * gm * gm * g2 * g2 * g3
        + 2.0 * a * b2 * g4
        - 2.0 * b2 * gm * g2 * g4
        - b2 * gm * g3 * g3
        + b2 * g5;
    GMoments { rho, g, a1_pow_11: [m0, m1, m2, m3, m4, m5] }
}

/// Closed-form traces of the one-dimensional blocks, used for analytic tail
/// corrections: `(tr A1, tr A2, tr A1^2, tr A2^2)`.
pub fn one_dim_traces(rho: f64) -> (f64, f64, f64, f64) {
    let gm = g_moments(rho);
    let [g1, g2, g3, _, _] = gm.g;
    let a = alpha(rho);
    let gam = -(-rho).exp_m1();
    let b2 = 2.0 * gam * gam / (rho * rho);
    let sum_v_sq = 2.0 * g1 / rho - g2; // sum_j v_j^2
    let tr_a1 = a + g1 - gam * g2;
    let tr_a2 = g1 + gam * sum_v_sq;
    let tr_a1_sq = a * a + 2.0 * b2 * g2 + g2 - 2.0 * gam * g3 + gam * gam * g2 * g2;
    let tr_a2_sq = g2 + 2.0 * gam * (2.0 * g2 / rho - g3) + gam * gam * sum_v_sq * sum_v_sq;
    (tr_a1, tr_a2, tr_a1_sq, tr_a2_sq)
}

// ---------------------------------------------------------------------------
// Product lattices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct HeapItem {
    value: f64,
    i: u32,
    j: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.partial_cmp(&other.value).unwrap_or(Ordering::Equal)
    }
}

/// Lattice entry: a product eigenvalue with its index pair and symbolic
/// multiplicity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeEntry {
    pub value: f64,
    pub i: u32,
    pub j: u32,
    pub mult: u32,
}

/// All products `a[i] * b[j]` at or above `threshold`, in decreasing order.
/// With `symmetric` only `i <= j` pairs are produced, carrying multiplicity 2
/// off the diagonal (index-permutation multiplicity, detected symbolically).
fn product_lattice(a: &[f64], b: &[f64], threshold: f64, symmetric: bool) -> Vec<LatticeEntry> {
    let mut out = Vec::new();
    if a.is_empty() || b.is_empty() {
        return out;
    }
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem { value: a[0] * b[0], i: 0, j: 0 });
    while let Some(HeapItem { value, i, j }) = heap.pop() {
        if value < threshold {
            break;
        }
        let mult = if symmetric && i != j { 2 } else { 1 };
        out.push(LatticeEntry { value, i, j, mult });
        let (iu, ju) = (i as usize, j as usize);
        if symmetric {
            // unique enumeration of i <= j: always advance j; advance i only
            // from the superdiagonal
            if ju + 1 < b.len() {
                heap.push(HeapItem { value: a[iu] * b[ju + 1], i, j: j + 1 });
            }
            if ju == iu + 1 && iu + 1 < a.len() {
                heap.push(HeapItem { value: a[iu + 1] * b[ju], i: i + 1, j });
            }
        } else {
            if ju + 1 < b.len() {
                heap.push(HeapItem { value: a[iu] * b[ju + 1], i, j: j + 1 });
            }
            if ju == 0 && iu + 1 < a.len() {
                heap.push(HeapItem { value: a[iu + 1] * b[0], i: i + 1, j: 0 });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Secular equation for S
// ---------------------------------------------------------------------------

/// Counters surfaced from the secular solver.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SecularStats {
    /// gaps solved by the quadratic iteration
    pub solved: usize,
    /// eigenvalues forced by permutation multiplicity (no equation involved)
    pub multiplicity_forced: usize,
    /// gaps where the quadratic had no in-interval root; lower endpoint used
    pub replaced_no_root: usize,
    /// iterations that fell back to a bisection step on the secular equation
    pub bisection_fallbacks: usize,
    /// iterates clamped back into the interlacing bracket
    pub clamped: usize,
    /// gaps past the detail cap, assigned the lower endpoint directly
    pub past_detail_cap: usize,
}

/// The flat, multiplicity-expanded base spectrum of `A1^{(x) D}` together
/// with secular weights, ready for gap solving.
struct SBase {
    /// unique decreasing values with multiplicity and total secular weight
    /// `mult * zeta^2`
    values: Vec<f64>,
    mults: Vec<u32>,
    weights: Vec<f64>, // mult * zeta'^2 (product over dims)
    /// suffix moment sums `sum_{s >= k} mult zeta^2 lambda^p`, p = 0..=5,
    /// accumulated from the small end so they carry full relative precision
    suffix: [Vec<f64>; 6],
    /// analytic moments beyond the generated lattice, clamped at zero where
    /// the closed form and the lattice total agree to rounding
    beyond: [f64; 6],
    /// full moments `(alpha (A1^p)_11)^D`
    moments: [f64; 6],
    alpha_d: f64,
}

impl SBase {
    fn new(values: Vec<f64>, mults: Vec<u32>, weights: Vec<f64>, moments: [f64; 6], alpha_d: f64) -> Self {
        let n = values.len();
        let mut suffix: [Vec<f64>; 6] = Default::default();
        let mut beyond = [0.0f64; 6];
        for p in 0..6 {
            let mut col = vec![0.0; n + 1];
            for k in (0..n).rev() {
                col[k] = col[k + 1] + weights[k] * values[k].powi(p as i32);
            }
            beyond[p] = (moments[p] - col[0]).max(0.0);
            suffix[p] = col;
        }
        // moments[p] - total[p] is a difference of near-equal closed-form and
        // root-based sums, so its rounding noise (~1e-16) would be amplified
        // by mu^{-(p+1)} in the remainder series; every beyond-lattice
        // eigenvalue is below the lattice minimum, which caps the moments
        let v_min = values[n - 1];
        for p in 1..6 {
            beyond[p] = beyond[p].min(beyond[0] * v_min.powi(p as i32));
        }
        SBase { values, mults, weights, suffix, beyond, moments, alpha_d }
    }

    /// F_l(mu) and F_l'(mu) for l = 0, 1, 2: explicit terms over the window
    /// `0..=w` except the entry `skip` (the pole the caller keeps exact;
    /// excluding it here instead of subtracting avoids cancellation), plus
    /// the Taylor remainder from the moment identities beyond the window.
    fn f_and_deriv(&self, mu: f64, w: usize, skip: usize) -> ([f64; 3], [f64; 3]) {
        let mut f = [0.0f64; 3];
        let mut fp = [0.0f64; 3];
        for k in 0..=w {
            if k == skip {
                continue;
            }
            let lam = self.values[k];
            let wgt = self.weights[k];
            let d = lam - mu;
            let inv = 1.0 / d;
            let base = wgt * inv;
            let base_p = wgt * inv * inv;
            f[0] += base;
            f[1] += base * lam;
            f[2] += base * lam * lam;
            fp[0] += base_p;
            fp[1] += base_p * lam;
            fp[2] += base_p * lam * lam;
        }
        // remainder: F_{l,-J}(mu) = -sum_r mu^{-(r+1)} B_{l+r},
        // B_p = tail moment beyond the window; orders limited by available
        // moments
        for l in 0..3 {
            let mut mu_pow = 1.0 / mu;
            for r in 0..=(5 - l) {
                let b = self.suffix[l + r][w + 1] + self.beyond[l + r];
                f[l] -= mu_pow * b;
                fp[l] += (r + 1) as f64 * mu_pow / mu * b;
                mu_pow /= mu;
            }
        }
        (f, fp)
    }

    /// Left-hand side of the secular characteristic equation at mu.
    fn equation(&self, mu: f64, w: usize) -> f64 {
        let (f, _) = self.f_and_deriv(mu, w, usize::MAX);
        let a = self.alpha_d;
        let t = 1.0 - f[1] / a;
        t * t + f[0] * (1.0 - f[2] / (a * a))
    }
}

/// Window end for gap `t`: all entries with value >= 0.01 * lower endpoint,
/// so the Taylor remainder ratio stays below 1e-2.
fn window_end(values: &[f64], t: usize) -> usize {
    let lo = values[t + 1];
    let cut = 0.01 * lo;
    // values sorted decreasing; find the last index with value >= cut
    let mut hi = values.len() - 1;
    let mut lo_i = t + 1;
    if values[hi] >= cut {
        return hi;
    }
    while hi - lo_i > 1 {
        let mid = (lo_i + hi) / 2;
        if values[mid] >= cut {
            lo_i = mid;
        } else {
            hi = mid;
        }
    }
    lo_i
}

/// Solve every gap of the S-base spectrum, producing the eigenvalues of `S`
/// with multiplicities and the accumulated shifts `sum_t (lambda_t - mu_t)`.
fn solve_s_spectrum(
    base: &SBase,
    detail_cap: usize,
    stats: &mut SecularStats,
) -> (Vec<(f64, u32)>, f64) {
    let n = base.values.len();
    let lambda1 = base.values[0];
    let tol = 1e-12 * lambda1;
    let mut out: Vec<(f64, u32)> = Vec::with_capacity(n);
    let mut shift_sum = 0.0;

    for t in 0..n.saturating_sub(1) {
        let hi = base.values[t];
        let lo = base.values[t + 1];
        let mult = base.mults[t];
        if mult > 1 {
            // permutation multiplicity forces mult-1 copies at the value
            out.push((hi, mult - 1));
            stats.multiplicity_forced += (mult - 1) as usize;
        }
        let gap = hi - lo;
        let mu = if gap <= 1e-15 * hi {
            lo
        } else if t >= detail_cap {
            stats.past_detail_cap += 1;
            lo
        } else {
            let w = window_end(&base.values, t);
            if gap < 0.02 * hi {
                // the quadratic iteration cannot resolve roots inside narrow
                // gaps in original coordinates; use the shifted fixed point
                solve_gap_narrow(base, t, w, stats)
            } else {
                solve_gap(base, t, w, tol, stats)
            }
        };
        out.push((mu, 1));
        shift_sum += hi - mu;
    }
    (out, shift_sum)
}

/// Root of the secular equation in a narrow gap, written as the fixed point
/// `x = w_lo / F0_excl(lo + x)` for the offset `x = mu - lambda_{k+1}`. The
/// full secular function is monotone on the gap, so a bisection safeguard on
/// the offset always converges.
fn solve_gap_narrow(base: &SBase, t: usize, w: usize, stats: &mut SecularStats) -> f64 {
    let hi = base.values[t];
    let lo = base.values[t + 1];
    let gap = hi - lo;
    let w_lo = base.weights[t + 1];

    // F0 excluding the lower pole, evaluated through shifted distances
    let f0_excl = |x: f64| -> f64 {
        let mut s = 0.0;
        for k in 0..=w {
            if k == t + 1 {
                continue;
            }
            s += base.weights[k] / ((base.values[k] - lo) - x);
        }
        let mu = lo + x;
        let mut mu_pow = 1.0 / mu;
        for r in 0..=5 {
            let b = base.suffix[r][w + 1] + base.beyond[r];
            s -= mu_pow * b;
            mu_pow /= mu;
        }
        s
    };

    let mut x_lo = 0.0f64;
    let mut x_hi = gap * (1.0 - 1e-12);
    let mut x = (w_lo / f0_excl(0.0).max(w_lo / (0.5 * gap))).clamp(1e-3 * gap, 0.5 * gap);
    for _ in 0..60 {
        let e = f0_excl(x);
        // full secular function at the trial offset decides the side
        if e - w_lo / x > 0.0 {
            x_hi = x;
        } else {
            x_lo = x;
        }
        let next = if e > 0.0 { w_lo / e } else { 0.5 * (x_lo + x_hi) };
        let next = if next > x_lo && next < x_hi {
            next
        } else {
            0.5 * (x_lo + x_hi)
        };
        if (next - x).abs() <= 1e-14 * gap.max(x) {
            x = next;
            break;
        }
        x = next;
    }
    stats.solved += 1;
    lo + x
}

/// One interlacing gap `(values[t+1], values[t])`: iterate the quadratic
/// approximation of the secular equation.
fn solve_gap(base: &SBase, t: usize, w: usize, tol: f64, stats: &mut SecularStats) -> f64 {
    let hi = base.values[t];
    let lo = base.values[t + 1];
    let gap = hi - lo;
    let big_c = base.mults[t + 1] as f64;
    let zeta_lo = base.weights[t + 1] / big_c;
    let q_w = big_c * zeta_lo; // C_{k+1} zeta^2_{k+1}
    let a_d = base.alpha_d;

    let mut mu = lo + 0.1 * gap;
    let mut bis_lo = lo;
    let mut bis_hi = hi;

    for _ in 0..20 {
        // the lower-endpoint pole (index t+1) is kept exact by the rational
        // model, so it is excluded from the generic sums
        let (f, fp) = base.f_and_deriv(mu, w, t + 1);

        let hi_gap = hi - mu;
        let mut a_tilde = [0.0f64; 3];
        let mut ok = true;
        for l in 0..3 {
            a_tilde[l] = hi_gap * hi_gap * fp[l];
            if a_tilde[l] <= 0.0 {
                ok = false;
            }
        }

        let next = if ok {
            // log-linear fit enforcing a1^2 = a0 a2
            let la = [a_tilde[0].ln(), a_tilde[1].ln(), a_tilde[2].ln()];
            let a0 = ((5.0 * la[0] + 2.0 * la[1] - la[2]) / 6.0).exp();
            let a1 = ((la[0] + la[1] + la[2]) / 3.0).exp();
            let a2 = ((-la[0] + 2.0 * la[1] + 5.0 * la[2]) / 6.0).exp();
            let b = [
                f[0] - a0 / hi_gap,
                f[1] - a1 / hi_gap,
                f[2] - a2 / hi_gap,
            ];
            let s1 = 2.0 * a1 * b[1] - a0 * b[2] - a2 * b[0] - 2.0 * a1 * a_d + a0 * a_d * a_d;
            let s2 = b[1] * b[1] - b[0] * b[2] - 2.0 * b[1] * a_d + (b[0] + 1.0) * a_d * a_d;
            let s3 = a0 * lo * lo - 2.0 * a1 * lo + a2;
            let s4 = b[0] * lo * lo - 2.0 * b[1] * lo + b[2] - a_d * a_d + 2.0 * a_d * lo;

            // quadratic: s2 (hi-mu)(lo-mu) + s1 (lo-mu) - q s4 (hi-mu) - q s3 = 0
            let qa = s2;
            let qb = -(s2 * (hi + lo) + s1 - q_w * s4);
            let qc = s2 * hi * lo + s1 * lo - q_w * s4 * hi - q_w * s3;
            match quadratic_roots_in(qa, qb, qc, lo, hi) {
                Some(root) => root,
                None => {
                    stats.replaced_no_root += 1;
                    return lo;
                }
            }
        } else {
            // a log fit is impossible; take a plain bisection step on the
            // secular equation, which is positive at the lower endpoint and
            // negative at the upper one
            stats.bisection_fallbacks += 1;
            let mid = 0.5 * (bis_lo + bis_hi);
            if base.equation(mid, w) > 0.0 {
                bis_lo = mid;
            } else {
                bis_hi = mid;
            }
            mid
        };

        let next = if next <= lo || next >= hi {
            stats.clamped += 1;
            next.clamp(lo + 1e-3 * gap, hi - 1e-3 * gap)
        } else {
            next
        };
        if (next - mu).abs() < tol {
            stats.solved += 1;
            return next;
        }
        mu = next;
    }
    stats.solved += 1;
    mu
}

/// Real roots of `qa x^2 + qb x + qc` inside `(lo, hi)`; with two, the one
/// nearer `lo` wins (the approximation is most accurate there).
fn quadratic_roots_in(qa: f64, qb: f64, qc: f64, lo: f64, hi: f64) -> Option<f64> {
    let mut roots = [0.0f64; 2];
    let mut count = 0;
    if qa == 0.0 {
        if qb != 0.0 {
            roots[0] = -qc / qb;
            count = 1;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (qb + qb.signum() * sq);
        roots[0] = q / qa;
        count = 1;
        if q != 0.0 {
            roots[1] = qc / q;
            count = 2;
        }
    }
    let mut best: Option<f64> = None;
    for &r in roots.iter().take(count) {
        if r > lo && r < hi {
            best = match best {
                None => Some(r),
                Some(b) if (r - lo).abs() < (b - lo).abs() => Some(r),
                keep => keep,
            };
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// The truncated null spectrum with analytic tail sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSpectrum {
    pub dim: usize,
    pub rho: f64,
    /// decreasing (eigenvalue, multiplicity)
    pub eigs: Vec<(f64, u32)>,
    /// `sum lambda_j = E0(Delta)` (analytic)
    pub sum_all: f64,
    /// `sum lambda_j^2`, analytically half the limiting variance since the
    /// asymptotic law is a weighted sum of squared standard normals
    pub sum_sq_all: f64,
    /// sums over the stored eigenvalues
    pub sum_trunc: f64,
    pub sum_sq_trunc: f64,
    pub stats: SecularStats,
    /// stored sums split by block, for trace-identity diagnostics
    pub diag: SpectrumDiag,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SpectrumDiag {
    /// `sum_t (lambda_t - mu_t)` over every gap of the generated base lattice
    pub s_shift_sum: f64,
    /// secular weight sums over the generated base lattice:
    /// `sum mult zeta^2` and `sum mult zeta^2 lambda`
    pub s_weight_sum: f64,
    pub s_weight_lambda_sum: f64,
}

impl NullSpectrum {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum serializes")
    }
}

/// Output of the standalone `S`-block eigensolve.
#[derive(Debug, Clone)]
pub struct SEigs {
    /// decreasing (eigenvalue, multiplicity)
    pub eigs: Vec<(f64, u32)>,
    pub stats: SecularStats,
    /// `sum_t (lambda_t - mu_t)` over all gaps of the solved flat prefix
    pub shift_sum: f64,
    /// the first base eigenvalue past the solved prefix; the interlacing
    /// telescope makes it the leading term of the remaining shift sum
    pub next_value: f64,
    /// secular weight partial sums over the generated lattice
    pub weight_sum: f64,
    pub weight_lambda_sum: f64,
    /// full weight moments `(alpha (A1^p)_11)^D` for p = 0, 1
    pub weight_total: f64,
    pub weight_lambda_total: f64,
}

/// Eigenvalues of `S` alone (sorted decreasing, with multiplicity), plus the
/// solver counters and trace diagnostics. `j` is the one-dimensional
/// truncation per family. For `dim = 2` the lattice is cut at the largest
/// omitted product so the processed values form a true prefix of the flat
/// spectrum; the full prefix can hold up to `(j+1)^2` products, so keep `j`
/// moderate there.
pub fn eigvals_s(rho: f64, dim: usize, j: usize) -> Result<SEigs> {
    let gm = g_moments(rho);
    let (base, next_value) = match dim {
        1 => {
            let one = OneDimSpectra::compute(rho, j + 1);
            let base = build_s_base(&one, gm, rho, 1, 0.0)?;
            let next = *base.values.last().expect("non-empty");
            (base, next)
        }
        2 => {
            let one = OneDimSpectra::compute(rho, j + 2);
            // the largest product outside the prefix pairs the top eigenvalue
            // with the first computed-but-excluded one
            let cut = one.lambda_a1[0] * one.lambda_a1[j + 1];
            let base = build_s_base(&one, gm, rho, 2, cut * (1.0 + 1e-12))?;
            (base, cut)
        }
        _ => {
            return Err(CfError::InvalidArgument(
                "spectrum assembly supports D in {1, 2}".into(),
            ))
        }
    };
    let mut stats = SecularStats::default();
    let (eigs, shift_sum) = solve_s_spectrum(&base, usize::MAX, &mut stats);
    Ok(SEigs {
        eigs,
        stats,
        shift_sum,
        next_value,
        weight_sum: base.suffix[0][0],
        weight_lambda_sum: base.suffix[1][0],
        weight_total: base.moments[0],
        weight_lambda_total: base.moments[1],
    })
}

fn build_s_base(
    one: &OneDimSpectra,
    gm: GMoments,
    rho: f64,
    dim: usize,
    threshold: f64,
) -> Result<SBase> {
    let a = alpha(rho);
    let alpha_d = a.powi(dim as i32);
    let mut moments = [0.0f64; 6];
    for p in 0..6 {
        moments[p] = (a * gm.a1_pow_11[p]).powi(dim as i32);
    }
    match dim {
        1 => {
            let values = one.lambda_a1.clone();
            let mults = vec![1u32; values.len()];
            let weights = one.zeta_sq.clone();
            Ok(SBase::new(values, mults, weights, moments, alpha_d))
        }
        2 => {
            let lattice = product_lattice(&one.lambda_a1, &one.lambda_a1, threshold, true);
            let mut values = Vec::with_capacity(lattice.len());
            let mut mults = Vec::with_capacity(lattice.len());
            let mut weights = Vec::with_capacity(lattice.len());
            for e in &lattice {
                values.push(e.value);
                mults.push(e.mult);
                weights.push(
                    e.mult as f64 * one.zeta_sq[e.i as usize] * one.zeta_sq[e.j as usize],
                );
            }
            Ok(SBase::new(values, mults, weights, moments, alpha_d))
        }
        _ => Err(CfError::InvalidArgument(
            "spectrum assembly supports D in {1, 2}".into(),
        )),
    }
}

/// Builds the truncated spectrum of the full operator for `D in {1, 2}`.
///
/// Keeps every eigenvalue at or above `1e-8 * lambda_max` and requires the
/// stored mass to reach 99.9% of the analytic eigenvalue sum; otherwise the
/// one-dimensional truncation `j` is too small and an error says so.
pub fn build_spectrum(rho: f64, dim: usize, j: usize) -> Result<NullSpectrum> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(CfError::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if dim == 0 || dim > 2 {
        return Err(CfError::InvalidArgument(
            "spectrum assembly supports D in {1, 2}".into(),
        ));
    }
    if j < 2 {
        return Err(CfError::InvalidArgument("need at least 2 roots per family".into()));
    }
    let one = OneDimSpectra::compute(rho, j + 1);
    let gm = g_moments(rho);
    let mut stats = SecularStats::default();
    let mut diag = SpectrumDiag::default();

    // cheap mass feasibility from the one-dimensional sums before any
    // lattice work: the stored mass cannot exceed what the computed roots
    // carry
    {
        let s1: f64 = one.lambda_a1[..j].iter().sum();
        let s2: f64 = one.lambda_a2[..j].iter().sum();
        let a_d = alpha(rho).powi(dim as i32);
        let reachable = (s1 + s2).powi(dim as i32) - a_d;
        if reachable < MASS_TARGET * null_mean(rho, dim) {
            return Err(CfError::TruncationUnreachable { j });
        }
    }

    // lambda_max of the operator bounds every block's top eigenvalue
    let l1 = one.lambda_a1[0];
    let l2 = one.lambda_a2[0];
    let lambda_max = match dim {
        1 => l1.max(l2),
        _ => (l1 * l1).max(l1 * l2).max(l2 * l2),
    };
    let keep = KEEP_FRACTION * lambda_max;

    let mut eigs: Vec<(f64, u32)> = Vec::new();

    // S block
    let base = build_s_base(&one, gm, rho, dim, 0.5 * keep)?;
    let (mu, shift_sum) = solve_s_spectrum(&base, SECULAR_DETAIL_CAP, &mut stats);
    for &(v, m) in &mu {
        if v >= keep {
            eigs.push((v, m));
        }
    }
    diag.s_shift_sum = shift_sum;
    diag.s_weight_sum = base.suffix[0][0];
    diag.s_weight_lambda_sum = base.suffix[1][0];

    // product blocks: d = 1..=D with multiplicity C(D, d)
    match dim {
        1 => {
            for &v in &one.lambda_a2 {
                if v >= keep {
                    eigs.push((v, 1));
                }
            }
        }
        _ => {
            // d = 1: A1 (x) A2 with multiplicity C(2,1) = 2
            for e in product_lattice(&one.lambda_a1, &one.lambda_a2, keep, false) {
                eigs.push((e.value, 2));
            }
            // d = 2: A2 (x) A2, multiplicity 1 with permutation pairs
            for e in product_lattice(&one.lambda_a2, &one.lambda_a2, keep, true) {
                eigs.push((e.value, e.mult));
            }
        }
    }

    eigs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let sum_all = null_mean(rho, dim);
    let sum_sq_all = 0.5 * limiting_variance(rho, dim);
    let sum_trunc: f64 = eigs.iter().map(|&(v, m)| v * m as f64).sum();
    let sum_sq_trunc: f64 = eigs.iter().map(|&(v, m)| v * v * m as f64).sum();

    if sum_trunc < MASS_TARGET * sum_all {
        return Err(CfError::TruncationUnreachable { j });
    }

    Ok(NullSpectrum {
        dim,
        rho,
        eigs,
        sum_all,
        sum_sq_all,
        sum_trunc,
        sum_sq_trunc,
        stats,
        diag,
    })
}

/// Builds a spectrum, sizing the one-dimensional truncation from the mass
/// requirement (per-family tails shrink like `rho / (2 pi^2 J)`) and
/// doubling on the rare shortfall.
pub fn build_spectrum_auto(rho: f64, dim: usize) -> Result<NullSpectrum> {
    let mass = null_mean(rho, dim).max(0.05);
    let est = 2600.0 * rho * dim as f64 / (std::f64::consts::PI.powi(2) * mass);
    let mut j = DEFAULT_J.max(est as usize);
    loop {
        match build_spectrum(rho, dim, j) {
            Err(CfError::TruncationUnreachable { .. }) if j < 400_000 => j *= 2,
            other => return other,
        }
    }
}
