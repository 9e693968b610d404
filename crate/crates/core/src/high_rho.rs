//! Small-sample null distribution at high resolution, from the asymptotic
//! cumulants `kappa_m = (n-1) (2/n)^{m-1} (2/m)^D rho^{-D}` (m >= 2) and the
//! exact mean, inverted through the Gil-Pelaez formula.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CfError, Result};
use crate::null_moments::{null_mean, null_variance};
use crate::quad::adaptive_gk;

/// Asymptotic cumulant of order `m >= 2`.
pub fn cumulant(m: usize, n: usize, rho: f64, dim: usize) -> Result<f64> {
    if m < 2 {
        return Err(CfError::InvalidArgument(
            "cumulants are asymptotic for m >= 2; the first is the exact mean".into(),
        ));
    }
    let nf = n as f64;
    Ok((nf - 1.0)
        * (2.0 / nf).powi(m as i32 - 1)
        * (2.0 / m as f64).powi(dim as i32)
        * rho.powi(-(dim as i32)))
}

/// Cumulant model of the statistic for one `(n, rho, D)` configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CumulantModel {
    pub n: usize,
    pub rho: f64,
    pub dim: usize,
    /// exact null mean (the paper sets kappa_1 = E(Delta))
    pub kappa1: f64,
    /// series truncation cap
    pub max_terms: usize,
}

impl CumulantModel {
    pub fn new(n: usize, rho: f64, dim: usize) -> Result<Self> {
        if n < 2 {
            return Err(CfError::InvalidArgument(format!(
                "high-rho model needs n >= 2, got {n}"
            )));
        }
        if !(rho > 0.0) || dim == 0 {
            return Err(CfError::InvalidArgument(
                "high-rho model needs rho > 0 and D >= 1".into(),
            ));
        }
        Ok(CumulantModel {
            n,
            rho,
            dim,
            kappa1: null_mean(rho, dim),
            max_terms: 200,
        })
    }

    pub fn kappa2(&self) -> f64 {
        cumulant(2, self.n, self.rho, self.dim).expect("m = 2")
    }

    /// Truncated cumulant generating function `K0(t) = i t kappa1 +
    /// sum_{m>=2} kappa_m (it)^m / m!`.
    pub fn k0(&self, t: f64) -> Result<Complex64> {
        let mut sum = Complex64::new(0.0, self.kappa1 * t);
        let it = Complex64::new(0.0, t);
        // (it)^m / m!, starting at m = 2
        let mut pow = it * it / 2.0;
        let mut peak = 0.0f64;
        for m in 2..=self.max_terms {
            let term = pow * cumulant(m, self.n, self.rho, self.dim)?;
            sum += term;
            peak = peak.max(term.norm());
            if term.norm() < 1e-16 * (1.0 + sum.norm()) {
                // the alternating series cancels down from `peak`; past the
                // point where the cancelled digits swamp the result, the sum
                // is numerically meaningless and must not be trusted
                if peak * 1e-16 > 1e-3 * (1.0 + sum.norm()) {
                    return Err(CfError::SeriesDivergence { t });
                }
                return Ok(sum);
            }
            pow = pow * it / (m + 1) as f64;
        }
        Err(CfError::SeriesDivergence { t })
    }

    /// True when `exp(Re K0)` stays within the unit modulus on a test grid,
    /// the empirical positive-definiteness check.
    pub fn modulus_bounded(&self, t_max: f64, points: usize) -> bool {
        for i in 1..=points {
            let t = t_max * i as f64 / points as f64;
            match self.k0(t) {
                Ok(v) => {
                    if v.re > 1e-10 {
                        return false;
                    }
                }
                Err(_) => return false,
            }
        }
        true
    }

    /// `pr(Delta <= x)` under the high-resolution null.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        gil_pelaez_cdf(|t| self.k0(t), x, self.kappa1, 1e-6)
    }

    /// Raw quantile of the high-resolution null (no variance adjustment).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.quantile_with_tol(p, 1e-5)
    }

    pub fn quantile_with_tol(&self, p: f64, tol: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CfError::InvalidArgument(format!(
                "quantile needs p in (0,1), got {p}"
            )));
        }
        let mean = self.kappa1;
        let var = self.kappa2();
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
            if (hi - lo) < 1e-12 * mean.max(1e-12) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Quantile adjusted to the exact finite-n variance, as prescribed for
    /// small samples: `exact_var = var0(Delta)`, `asym_var = kappa2`.
    pub fn quantile_adjusted(&self, p: f64) -> Result<f64> {
        let q = self.quantile(p)?;
        let exact = null_variance(self.rho, self.dim, self.n)?;
        Ok(crate::imhof::adjust_quantile(q, self.kappa1, exact, self.kappa2()))
    }
}

/// Gil-Pelaez inversion `1/2 - (1/pi) int_0^inf sin(Im K(t) - t x)/t
/// exp(Re K(t)) dt` with a doubling search for the damping cutoff.
pub fn gil_pelaez_cdf<K>(k0: K, x: f64, mean: f64, abs_tol: f64) -> Result<f64>
where
    K: Fn(f64) -> Result<Complex64>,
{
    // cutoff: exp(Re K0(U)) < 1e-9; when the cumulant series stops
    // converging first (enormous t), integrate as far as it reaches --
    // the damping there is already many orders below the integrand scale
    let mut u_max = 1.0f64;
    loop {
        match k0(u_max * 2.0) {
            Ok(v) if v.re > (1e-9f64).ln() && u_max < 1e9 => u_max *= 2.0,
            Ok(_) => {
                u_max *= 2.0;
                break;
            }
            Err(_) => break,
        }
    }

    let integrand = |t: f64| -> f64 {
        if t <= 0.0 {
            return mean - x;
        }
        match k0(t) {
            Ok(v) => (v.im - t * x).sin() / t * v.re.exp(),
            Err(_) => 0.0,
        }
    };
    let freq = (x - mean).abs().max(mean.abs()).max(1.0 / u_max);
    let step = std::f64::consts::PI / (2.0 * freq);
    let mut seeds = Vec::new();
    let mut t = step.min(u_max / 16.0);
    let step = t;
    while t < u_max && seeds.len() < 30_000 {
        seeds.push(t);
        t += step;
    }
    let (integral, _) = adaptive_gk(
        &integrand,
        0.0,
        u_max,
        abs_tol / 2.0 * std::f64::consts::PI,
        90_000,
        &seeds,
    )?;
    if !integral.is_finite() {
        return Err(CfError::QuadratureFailure { requested: abs_tol, achieved: f64::NAN });
    }
    Ok((0.5 - integral / std::f64::consts::PI).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::null_moments::null_variance;

    #[test]
    fn second_cumulant_closed_form_one_dimension() {
        let n = 12;
        let rho = 7.0;
        let k2 = cumulant(2, n, rho, 1).unwrap();
        let expect = 2.0 * (n as f64 - 1.0) / (n as f64 * rho);
        assert!((k2 - expect).abs() < 1e-15);
        assert!(cumulant(1, n, rho, 1).is_err());
    }

    #[test]
    fn second_cumulant_approaches_exact_variance_at_high_rho() {
        let n = 25;
        let rho = 2.0 * std::f64::consts::PI * 5.0;
        let k2 = cumulant(2, n, rho, 2).unwrap();
        let exact = null_variance(rho, 2, n).unwrap();
        assert!(
            ((k2 - exact) / exact).abs() < 0.05,
            "kappa2 {k2} vs exact {exact}"
        );
    }

    #[test]
    fn cumulants_decay_geometrically() {
        let n = 25;
        let rho = 30.0;
        let mut prev = cumulant(2, n, rho, 2).unwrap();
        for m in 3..20 {
            let k = cumulant(m, n, rho, 2).unwrap();
            assert!(k < prev && k > 0.0);
            prev = k;
        }
    }

    #[test]
    fn k0_at_zero_and_conjugate_symmetry() {
        let model = CumulantModel::new(25, 30.0, 2).unwrap();
        assert_eq!(model.k0(0.0).unwrap(), Complex64::new(0.0, 0.0));
        let plus = model.k0(3.7).unwrap();
        let minus = model.k0(-3.7).unwrap();
        assert!((plus.re - minus.re).abs() < 1e-14);
        assert!((plus.im + minus.im).abs() < 1e-14);
    }

    #[test]
    fn k0_real_part_matches_even_term_summation() {
        // Re K0(t) = sum over even m of kappa_m (-1)^{m/2} t^m / m!
        let model = CumulantModel::new(25, 2.0 * std::f64::consts::PI * 5.0, 2).unwrap();
        let t = 1.0f64;
        let mut expect = 0.0;
        let mut fact = 1.0f64;
        for m in 1..=400usize {
            fact *= m as f64;
            if m >= 2 && m % 2 == 0 {
                let sgn = if m % 4 == 0 { 1.0 } else { -1.0 };
                expect += sgn * cumulant(m, 25, 2.0 * std::f64::consts::PI * 5.0, 2).unwrap()
                    * t.powi(m as i32)
                    / fact;
            }
        }
        let got = model.k0(t).unwrap().re;
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn gaussian_toy_model_centers_at_half() {
        // kappa2 only: K0 = i t k1 - k2 t^2 / 2 inverts to Phi((x-k1)/sqrt(k2))
        let k1 = 0.4;
        let k2 = 0.01;
        let k0 = |t: f64| {
            Ok(Complex64::new(-0.5 * k2 * t * t, k1 * t))
        };
        let at_mean = gil_pelaez_cdf(k0, k1, k1, 1e-7).unwrap();
        assert!((at_mean - 0.5).abs() < 1e-6, "{at_mean}");
        let one_sd = gil_pelaez_cdf(k0, k1 + k2.sqrt(), k1, 1e-7).unwrap();
        assert!((one_sd - 0.841344746).abs() < 1e-5, "{one_sd}");
    }

    #[test]
    fn far_left_tail_vanishes() {
        let model = CumulantModel::new(25, 2.0 * std::f64::consts::PI * 5.0, 2).unwrap();
        let x = model.kappa1 - 1e3 * model.kappa2().sqrt();
        let f = model.cdf(x).unwrap();
        assert!(f < 1e-4, "{f}");
    }

    #[test]
    fn quantile_round_trip_and_monotonicity() {
        let model = CumulantModel::new(25, 2.0 * std::f64::consts::PI * 5.0, 2).unwrap();
        let q = model.quantile(0.975).unwrap();
        let f = model.cdf(q).unwrap();
        assert!((f - 0.975).abs() < 1e-4, "{f}");
        assert!(model.quantile(0.9).unwrap() > model.quantile(0.1).unwrap());
    }

    #[test]
    fn modulus_stays_bounded_on_grid() {
        for &(n, rho) in &[(25usize, 15.7), (25, 31.4), (100, 62.8), (200, 88.0)] {
            let model = CumulantModel::new(n, rho, 2).unwrap();
            assert!(model.modulus_bounded(50.0, 64), "n={n} rho={rho}");
        }
    }

    #[test]
    fn adjusted_quantile_moves_toward_mean_when_exact_var_smaller() {
        let model = CumulantModel::new(25, 35.0, 2).unwrap();
        let raw = model.quantile(0.975).unwrap();
        let adj = model.quantile_adjusted(0.975).unwrap();
        let exact = null_variance(35.0, 2, 25).unwrap();
        if exact < model.kappa2() {
            assert!(adj < raw);
        } else {
            assert!(adj >= raw);
        }
    }
}
