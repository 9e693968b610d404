//! CDF and quantiles of the asymptotic null `sum_j lambda_j Z_j^2` by
//! numerical inversion of its characteristic function.
//!
//! The integrand needs `theta(u) = (1/2) sum arctan(lambda_j u)` and
//! `eta(u) = (1/4) sum log(1 + lambda_j^2 u^2)` over the whole spectrum.
//! Stored eigenvalues below a cut that keeps `lambda u` small across the
//! integration range enter through their exact power sums (the series of
//! both terms converges fast there), the analytic beyond-truncation tail
//! enters at first and second order, and arctangents of near-equal
//! neighbours reuse a first-order expansion around the last exact call.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CfError, Result};
use crate::quad::adaptive_gk;
use crate::spectrum::NullSpectrum;

/// Test-statistic scale below which the series form of `arctan` is used.
const SERIES_ARG: f64 = 0.01;
/// Neighbour gap (times u) under which the arctan expansion replaces a call.
const ANCHOR_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImhofEvaluator {
    dim: usize,
    rho: f64,
    /// explicit eigenvalues (descending) with real-valued multiplicities
    head_vals: Vec<f64>,
    head_wts: Vec<f64>,
    /// power sums `sum mult lambda^p`, p = 1..=7, of the compressed tail
    tail_pows: [f64; 7],
    /// first/second-order beyond-truncation corrections
    tail1: f64,
    tail2: f64,
    sum_all: f64,
    sum_sq_all: f64,
    /// integration cutoff with `exp(-eta(U)) < abs_tol / 10`
    u_max: f64,
    abs_tol: f64,
}

impl ImhofEvaluator {
    pub fn new(spectrum: &NullSpectrum, abs_tol: f64) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol <= 1e-3) {
            return Err(CfError::InvalidArgument(format!(
                "imhof abs_tol must lie in (0, 1e-3], got {abs_tol}"
            )));
        }
        let tail1 = (spectrum.sum_all - spectrum.sum_trunc).max(0.0);
        let tail2 = (spectrum.sum_sq_all - spectrum.sum_sq_trunc).max(0.0);

        // locate the integration cutoff by doubling on the full spectrum
        let eta_full = |u: f64| -> f64 {
            let mut eta = 0.0;
            for &(v, m) in &spectrum.eigs {
                eta += m as f64 * (v * v * u * u).ln_1p();
            }
            0.25 * (eta + tail2 * u * u)
        };
        let eta_target = (10.0 / abs_tol).ln();
        let mut u_max = 1.0;
        while eta_full(u_max) < eta_target && u_max < 1e12 {
            u_max *= 2.0;
        }
        // one bisection refinement pass keeps the range tight
        let mut lo = u_max / 2.0;
        let mut hi = u_max;
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if eta_full(mid) < eta_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        u_max = hi;

        // compress everything with lambda * u_max below the series regime
        let cut = 0.6 * SERIES_ARG / u_max;
        let mut head_vals = Vec::new();
        let mut head_wts = Vec::new();
        let mut tail_pows = [0.0f64; 7];
        for &(v, m) in &spectrum.eigs {
            if v >= cut {
                head_vals.push(v);
                head_wts.push(m as f64);
            } else {
                let mut pw = v;
                for t in tail_pows.iter_mut() {
                    *t += m as f64 * pw;
                    pw *= v;
                }
            }
        }

        Ok(ImhofEvaluator {
            dim: spectrum.dim,
            rho: spectrum.rho,
            head_vals,
            head_wts,
            tail_pows,
            tail1,
            tail2,
            sum_all: spectrum.sum_all,
            sum_sq_all: spectrum.sum_sq_all,
            u_max,
            abs_tol,
        })
    }

    /// Builds an evaluator holding every eigenvalue explicitly; used by tests
    /// that exercise the summation shortcuts against naive summation.
    pub fn theta_eta_naive(spectrum: &NullSpectrum, u: f64) -> (f64, f64) {
        let tail1 = (spectrum.sum_all - spectrum.sum_trunc).max(0.0);
        let tail2 = (spectrum.sum_sq_all - spectrum.sum_sq_trunc).max(0.0);
        let mut theta = 0.0;
        let mut eta = 0.0;
        for &(v, m) in &spectrum.eigs {
            theta += m as f64 * (v * u).atan();
            eta += m as f64 * (v * v * u * u).ln_1p();
        }
        (
            0.5 * (theta + tail1 * u),
            0.25 * (eta + tail2 * u * u),
        )
    }

    /// `theta(u)` and `eta(u)` with the series, anchor, and tail shortcuts.
    pub fn theta_eta(&self, u: f64) -> (f64, f64) {
        let mut theta = 0.0;
        let mut eta_log = 0.0;
        let mut eta_small = 0.0;
        let mut prod = 1.0f64;

        // anchored arctan evaluation over the explicit head
        let mut anchor_val = f64::INFINITY;
        let mut anchor_atan = 0.0;
        let mut anchor_den = 1.0;
        for (&v, &m) in self.head_vals.iter().zip(&self.head_wts) {
            let z = v * u;
            if z < SERIES_ARG {
                let z2 = z * z;
                theta += m * z * (1.0 - z2 / 3.0 + z2 * z2 / 5.0 - z2 * z2 * z2 / 7.0);
                eta_small += m * (z2 - z2 * z2 / 2.0 + z2 * z2 * z2 / 3.0);
                continue;
            }
            if (anchor_val - v) * u < ANCHOR_GAP {
                // first-order expansion around the previous exact arctangent
                theta += m * (anchor_atan + (v - anchor_val) * u / anchor_den);
            } else {
                anchor_atan = z.atan();
                anchor_val = v;
                anchor_den = 1.0 + z * z;
                theta += m * anchor_atan;
            }
            // eta through the product of (1 + z^2) factors
            let f = 1.0 + z * z;
            let mut left = m;
            while left >= 1.0 {
                prod *= f;
                left -= 1.0;
                if prod > 1e100 {
                    eta_log += prod.ln();
                    prod = 1.0;
                }
            }
        }
        eta_log += prod.ln();

        // compressed tail by exact power sums (series of atan and log1p)
        let [p1, p2, p3, p4, p5, p6, p7] = self.tail_pows;
        let u2 = u * u;
        theta += u * p1 - u * u2 * p3 / 3.0 + u * u2 * u2 * p5 / 5.0 - u * u2 * u2 * u2 * p7 / 7.0;
        eta_small += u2 * p2 - u2 * u2 * p4 / 2.0 + u2 * u2 * u2 * p6 / 3.0;

        // analytic beyond-truncation corrections
        theta += self.tail1 * u;
        let eta = 0.25 * (eta_log + eta_small + self.tail2 * u2);
        (0.5 * theta, eta)
    }

    fn integrand(&self, x: f64, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.5 * (self.sum_all - x);
        }
        let (theta, eta) = self.theta_eta(u);
        let damp = (-eta).exp();
        if damp == 0.0 {
            return 0.0;
        }
        (theta - 0.5 * x * u).sin() / u * damp
    }

    /// `theta'(u)` and the local decay exponent `d eta / d ln u =
    /// (1/2) sum m z^2/(1+z^2)`, both exact over the head and through power
    /// sums over the compressed tail.
    fn phase_and_decay(&self, u: f64) -> (f64, f64) {
        let mut tp = 0.0;
        let mut decay = 0.0;
        for (&v, &m) in self.head_vals.iter().zip(&self.head_wts) {
            let z = v * u;
            let den = 1.0 + z * z;
            tp += m * v / den;
            decay += m * z * z / den;
        }
        let [p1, p2, p3, p4, p5, p6, _] = self.tail_pows;
        let u2 = u * u;
        tp += p1 - u2 * p3 + u2 * u2 * p5;
        decay += u2 * p2 - u2 * u2 * p4 + u2 * u2 * u2 * p6;
        tp += self.tail1;
        decay += u2 * self.tail2;
        (0.5 * tp, 0.5 * decay)
    }

    /// Integration cutoff for a given x: stop once the remaining tail of the
    /// inversion integral, bounded through either the local power-law decay
    /// or the oscillation of `sin(theta - x u / 2)`, drops below the budget.
    fn integration_limit(&self, x: f64) -> f64 {
        let budget = std::f64::consts::PI * self.abs_tol / 10.0;
        let mut u = 1.0f64;
        while u < self.u_max {
            let (_, eta) = self.theta_eta(u);
            let damp = (-eta).exp();
            let (theta_p, decay) = self.phase_and_decay(u);
            let phase_rate = (0.5 * x - theta_p).abs();
            let tail_decay = if decay > 0.1 { damp / decay } else { f64::INFINITY };
            let tail_osc = if phase_rate > 0.0 {
                damp * 2.0 / (u * phase_rate)
            } else {
                f64::INFINITY
            };
            if tail_decay.min(tail_osc) <= budget {
                return u;
            }
            u *= 2.0;
        }
        self.u_max
    }

    /// `pr(Delta <= x)` in the large-sample limit.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(CfError::InvalidArgument(format!("imhof cdf at x = {x}")));
        }
        if x <= 0.0 {
            // every eigenvalue is positive
            return Ok(0.0);
        }
        let u_hi = self.integration_limit(x);
        // seed the panels at the oscillation scale of sin(theta - x u / 2)
        let freq = (0.5 * x).max(0.5 * self.sum_all).max(1.0 / u_hi);
        let step = std::f64::consts::PI / (2.0 * freq);
        let mut seeds = Vec::new();
        let mut t = step.min(u_hi / 16.0);
        let step = t;
        while t < u_hi && seeds.len() < 30_000 {
            seeds.push(t);
            t += step;
        }
        let (integral, _) = adaptive_gk(
            &|u| self.integrand(x, u),
            0.0,
            u_hi,
            self.abs_tol / 2.0 * std::f64::consts::PI,
            90_000,
            &seeds,
        )?;
        Ok((0.5 - integral / std::f64::consts::PI).clamp(0.0, 1.0))
    }

    /// Inverts the CDF by bracketed root-finding from a moment-matched
    /// log-normal initial guess. `tol` is on the probability scale.
    pub fn quantile_with_tol(&self, p: f64, tol: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CfError::InvalidArgument(format!(
                "quantile needs p in (0,1), got {p}"
            )));
        }
        let mean = self.sum_all;
        let var = 2.0 * self.sum_sq_all;
        let sigma_sq = (1.0 + var / (mean * mean)).ln();
        let mu_ln = mean.ln() - 0.5 * sigma_sq;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut q = (mu_ln + sigma_sq.sqrt() * normal.inverse_cdf(p)).exp();

        let mut f = self.cdf(q)?;
        let (mut lo, mut hi, mut flo, mut fhi);
        if f < p {
            lo = q;
            flo = f;
            loop {
                q *= 1.6;
                f = self.cdf(q)?;
                if f >= p || q > 1e6 * mean {
                    break;
                }
                lo = q;
                flo = f;
            }
            hi = q;
            fhi = f;
        } else {
            hi = q;
            fhi = f;
            loop {
                q /= 1.6;
                f = self.cdf(q)?;
                if f <= p || q < 1e-9 * mean {
                    break;
                }
                hi = q;
                fhi = f;
            }
            lo = q;
            flo = f;
        }

        for _ in 0..80 {
            // secant proposal, safeguarded by bisection
            let mut mid = if fhi > flo {
                lo + (p - flo) * (hi - lo) / (fhi - flo)
            } else {
                0.5 * (lo + hi)
            };
            if !(mid > lo && mid < hi) {
                mid = 0.5 * (lo + hi);
            }
            let fm = self.cdf(mid)?;
            if (fm - p).abs() <= tol {
                return Ok(mid);
            }
            if fm < p {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
            if (hi - lo) < 1e-12 * mean {
                return Ok(0.5 * (lo + hi));
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.quantile_with_tol(p, 1e-5)
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn mean(&self) -> f64 {
        self.sum_all
    }

    pub fn asymptotic_variance(&self) -> f64 {
        2.0 * self.sum_sq_all
    }
}

/// Rescales an asymptotic quantile to the exact finite-n variance around the
/// (shared) exact mean.
pub fn adjust_quantile(q: f64, exact_mean: f64, exact_var: f64, asym_var: f64) -> f64 {
    (q - exact_mean) * (exact_var / asym_var).sqrt() + exact_mean
}
