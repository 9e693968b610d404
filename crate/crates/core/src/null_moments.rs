//! Exact null mean and variance of the Cauchy-weight statistic under CSR.
//!
//! All three moment brackets factorize over dimensions, so each is computed
//! as the D-th power of its one-dimensional value. The three one-dimensional
//! brackets share the same cancellation problem near rho = 0 (numerators are
//! O(rho^2)..O(rho^3) differences of O(1) terms), so each switches to an exact
//! power series below `SERIES_CUTOFF`.

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};

/// Below this the moment brackets are evaluated by power series.
const SERIES_CUTOFF: f64 = 0.25;

/// `alpha(rho) = 2 (e^{-rho} + rho - 1) / rho^2`, the one-dimensional value of
/// `E xi(y - y')` for independent uniforms. Also the trace deficit of the
/// compressed operator in the spectrum module.
pub fn alpha(rho: f64) -> f64 {
    debug_assert!(rho > 0.0);
    if rho < SERIES_CUTOFF {
        alpha_series(rho)
    } else {
        alpha_closed(rho)
    }
}

fn alpha_series(rho: f64) -> f64 {
    // 2 sum_{k>=0} (-rho)^k / (k+2)!
    let mut sum = 0.0;
    let mut term = 1.0 / 2.0; // k = 0: 1/2!
    let mut k = 0usize;
    loop {
        sum += term;
        k += 1;
        term *= -rho / (k + 2) as f64;
        if term.abs() < 1e-18 * sum.abs() || k > 40 {
            break;
        }
    }
    2.0 * sum
}

fn alpha_closed(rho: f64) -> f64 {
    2.0 * ((-rho).exp_m1() + rho) / (rho * rho)
}

/// One-dimensional `E xi^2 = E e^{-2 rho |y - y'|}`, which equals `alpha(2 rho)`.
pub fn xi_sq_bracket(rho: f64) -> f64 {
    alpha(2.0 * rho)
}

/// One-dimensional `E xi(x1 - x3) xi(x2 - x3)` over independent uniforms:
/// `(-e^{-2 rho} + 2 e^{-rho}(rho + 4) + 4 rho - 7) / rho^3`.
pub fn chain_bracket(rho: f64) -> f64 {
    debug_assert!(rho > 0.0);
    if rho < 2.0 * SERIES_CUTOFF {
        chain_series(rho)
    } else {
        chain_closed(rho)
    }
}

fn chain_series(rho: f64) -> f64 {
    // sum_{m>=0} (-1)^m [2^{m+3} + 2(m+3) - 8] / (m+3)! * rho^m
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut fact = 6.0; // 3!
    let mut two_pow = 8.0; // 2^3
    for m in 0..60 {
        let k = m + 3;
        let coeff = (two_pow + 2.0 * k as f64 - 8.0) / fact;
        let term = pow * coeff;
        sum += if m % 2 == 0 { term } else { -term };
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        pow *= rho;
        fact *= (k + 1) as f64;
        two_pow *= 2.0;
    }
    sum
}

fn chain_closed(rho: f64) -> f64 {
    let e1 = (-rho).exp_m1(); // e^{-rho} - 1
    let e2 = (-2.0 * rho).exp_m1(); // e^{-2 rho} - 1
    // -e^{-2rho} + 2 e^{-rho}(rho+4) + 4rho - 7 == 6rho - e2 + 2(rho+4) e1
    (6.0 * rho - e2 + 2.0 * (rho + 4.0) * e1) / (rho * rho * rho)
}

/// Null mean `E0(Delta) = 1 - alpha(rho)^D`.
pub fn null_mean(rho: f64, dim: usize) -> f64 {
    1.0 - alpha(rho).powi(dim as i32)
}

/// Exact finite-n null variance (Cauchy weight):
/// `(2n-6)/n a^2D + (2n-2)/n a2^D - (4n-8)/n c^D`.
pub fn null_variance(rho: f64, dim: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(CfError::InvalidArgument(format!(
            "null variance requires n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    Ok(variance_with_coeffs(
        rho,
        dim,
        (2.0 * nf - 6.0) / nf,
        (2.0 * nf - 2.0) / nf,
        (4.0 * nf - 8.0) / nf,
    ))
}

/// The n -> infinity limit of the variance, which equals the sum of squared
/// eigenvalues of the null operator.
pub fn limiting_variance(rho: f64, dim: usize) -> f64 {
    variance_with_coeffs(rho, dim, 2.0, 2.0, 4.0)
}

fn variance_with_coeffs(rho: f64, dim: usize, c1: f64, c2: f64, c3: f64) -> f64 {
    let d = dim as i32;
    let a = alpha(rho).powi(2 * d);
    let b = xi_sq_bracket(rho).powi(d);
    let c = chain_bracket(rho).powi(d);
    c1 * a + c2 * b - c3 * c
}

/// Mean and variance bundle for a given configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullMoments {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
    pub rho: f64,
    pub dim: usize,
}

impl NullMoments {
    pub fn new(rho: f64, dim: usize, n: usize) -> Result<Self> {
        Ok(NullMoments {
            mean: null_mean(rho, dim),
            variance: null_variance(rho, dim, n)?,
            n,
            rho,
            dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre;

    // Quadrature oracles for the one-dimensional brackets, integrating the
    // defining uniform expectations directly. The |u - v| kink is handled by
    // splitting the inner integral at the kink.
    fn inner_xi_integral(rho: f64, z: f64, order: usize) -> f64 {
        // int_0^1 e^{-rho |x - z|} dx, split at x = z
        let mut s = 0.0;
        for &(x, w) in &gauss_legendre(order, 0.0, z) {
            s += w * (-rho * (z - x)).exp();
        }
        for &(x, w) in &gauss_legendre(order, z, 1.0) {
            s += w * (-rho * (x - z)).exp();
        }
        s
    }

    fn alpha_oracle(rho: f64) -> f64 {
        gauss_legendre(48, 0.0, 1.0)
            .iter()
            .map(|&(v, w)| w * inner_xi_integral(rho, v, 48))
            .sum()
    }

    fn chain_oracle(rho: f64) -> f64 {
        gauss_legendre(48, 0.0, 1.0)
            .iter()
            .map(|&(z, w)| {
                let h = inner_xi_integral(rho, z, 48);
                w * h * h
            })
            .sum()
    }

    #[test]
    fn alpha_matches_quadrature_oracle() {
        for &rho in &[0.05, 0.3, 0.7, 1.0, 2.0, 5.0, 25.0] {
            let closed = alpha(rho);
            let oracle = alpha_oracle(rho);
            assert!(
                (closed - oracle).abs() < 1e-11 * closed.max(1e-12),
                "rho={rho}: closed {closed} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn chain_bracket_matches_quadrature_oracle() {
        for &rho in &[0.05, 0.3, 1.0, 2.0, 5.0, 25.0] {
            let closed = chain_bracket(rho);
            let oracle = chain_oracle(rho);
            assert!(
                (closed - oracle).abs() < 1e-11 * closed.max(1e-12),
                "rho={rho}: closed {closed} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn series_and_closed_form_agree_near_the_cutoff() {
        for &rho in &[0.1, 0.2, SERIES_CUTOFF, 0.3] {
            assert!((alpha_series(rho) - alpha_closed(rho)).abs() < 1e-13);
        }
        for &rho in &[0.2, 0.4, 2.0 * SERIES_CUTOFF, 0.6] {
            assert!((chain_series(rho) - chain_closed(rho)).abs() < 1e-12);
        }
    }

    #[test]
    fn null_mean_known_value() {
        // rho = 1, D = 2: 1 - (2/e)^2
        let expect = 1.0 - (2.0 / std::f64::consts::E).powi(2);
        assert!((null_mean(1.0, 2) - expect).abs() < 1e-15);
        assert!((expect - 0.458_658_867_053_549_7).abs() < 1e-12);
    }

    #[test]
    fn null_mean_limits() {
        assert!(null_mean(1e-6, 2).abs() < 1e-4);
        assert!((null_mean(1e6, 1) - 1.0).abs() < 1e-5);
        assert!(null_mean(1e-7, 1) > 0.0);
    }

    #[test]
    fn null_variance_vanishes_as_rho_to_zero() {
        let v = null_variance(1e-6, 2, 25).unwrap();
        assert!(v.abs() < 1e-5, "variance {v}");
        assert!(null_variance(1.0, 2, 25).unwrap() > 0.0);
    }

    #[test]
    fn null_variance_rejects_small_n() {
        assert!(null_variance(1.0, 2, 1).is_err());
    }

    #[test]
    fn finite_n_variance_approaches_the_limit() {
        for &rho in &[1.0, 8.0] {
            let lim = limiting_variance(rho, 2);
            let big = null_variance(rho, 2, 1_000_000).unwrap();
            assert!(
                ((big - lim) / lim).abs() < 1e-3,
                "rho={rho}: {big} vs {lim}"
            );
        }
    }

    #[test]
    fn brackets_factorize_over_dimensions() {
        // the D-dimensional brackets are D-th powers of the 1-d ones; check
        // the mean and variance use exactly that route.
        let rho = 2.5;
        let a1 = alpha(rho);
        assert!((null_mean(rho, 3) - (1.0 - a1.powi(3))).abs() < 1e-15);
        let v1 = limiting_variance(rho, 1);
        let expect =
            2.0 * alpha(rho).powi(2) + 2.0 * xi_sq_bracket(rho) - 4.0 * chain_bracket(rho);
        assert!((v1 - expect).abs() < 1e-15);
    }

    #[test]
    fn variance_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        // Monte Carlo oracle for var0(Delta) at rho=1, D=2, n=25.
        let (rho, dim, n) = (1.0, 2usize, 25usize);
        let reps = 200_000usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut m4 = 0.0;
        for _ in 0..reps {
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let pat = crate::patterns::PointPattern::new(pts, dim).unwrap();
            let d = crate::statistic::cf_statistic(&pat, crate::statistic::Resolution::new(rho).unwrap());
            sum += d;
            sumsq += d * d;
            m4 += d * d * d * d;
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let exact = null_variance(rho, dim, n).unwrap();
        // sampling error of the variance estimator
        let var_of_var = (m4 / reps as f64 - (sumsq / reps as f64).powi(2)) / reps as f64;
        let se = var_of_var.sqrt();
        assert!(
            (var - exact).abs() < 3.0 * se + 1e-9,
            "mc {var} vs exact {exact} (se {se})"
        );
        let mean_exact = null_mean(rho, dim);
        let se_mean = (exact / reps as f64).sqrt();
        assert!((mean - mean_exact).abs() < 4.0 * se_mean);
    }
}
