//! Numerical-integration oracle for the weighted L2 statistic.
//!
//! Evaluates `Delta = int n |phi_0(t) - phi_hat(t)|^2 w(t) dt` without using
//! any of the closed forms in `statistic`. The integrand expands into a sum
//! of terms that are separable across dimensions, so the D-dimensional
//! integral over a truncated product box reduces exactly to products of
//! one-dimensional integrals:
//!
//! * `J(c)  = int cos(c t) w1(t) dt`        (pair terms, one per coordinate)
//! * `M(x)  = int Re[phi01(t) e^{-itx}] w1(t) dt`  (cross terms)
//! * `P     = int |phi01(t)|^2 w1(t) dt`     (null-CF term)
//!
//! Each one-dimensional integral is computed by adaptive Gauss-Kronrod over
//! `[0, L]` plus a twice-integrated-by-parts tail whose remainder is bounded
//! explicitly. The heavy Cauchy tails make naive box truncation at 1e-6
//! accuracy infeasible; the tail corrections keep the total truncation error
//! below the requested tolerance.

use rayon::prelude::*;

use crate::error::{CfError, Result};
use crate::patterns::PointPattern;
use crate::quad::adaptive_gk;
use crate::statistic::Resolution;

/// Weight densities with a product structure across dimensions.
#[derive(Debug, Clone, Copy)]
pub enum WeightKernel {
    /// Independent symmetric Cauchy with scale rho: `w1(t) = rho / (pi (t^2 + rho^2))`.
    Cauchy { rho: f64 },
    /// Normalized squared modulus of the uniform CF: `w1(t) = (1 - cos t) / (pi t^2)`.
    Triangular,
}

const MAX_PANELS: usize = 60_000;

/// Oscillation-aware panel seeds for `[0, hi]`: geometric panels resolving the
/// weight scale near the origin plus uniform panels at a quarter period.
fn seeds(hi: f64, freq: f64, scale: f64) -> Vec<f64> {
    let mut s = Vec::new();
    let mut g = (scale / 8.0).max(hi * 1e-12);
    while g < hi {
        s.push(g);
        g *= 2.0;
    }
    if freq > 0.0 {
        let step = std::f64::consts::FRAC_PI_2 / freq;
        let count = (hi / step) as usize;
        if count <= 12_000 {
            let mut t = step;
            while t < hi {
                s.push(t);
                t += step;
            }
        } else {
            // fall back to a capped uniform grid; the adaptive pass refines
            let step = hi / 12_000.0;
            let mut t = step;
            while t < hi {
                s.push(t);
                t += step;
            }
        }
    }
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    s
}

/// `int_L^inf cos(b t) g(t) dt` by two integrations by parts.
/// Requires `g'' >= 0` and `g' <= 0` on `[L, inf)`; the remainder is then
/// bounded by `|g'(L)| / b^2`, which the caller checks against its budget.
fn tail_cos(b: f64, l: f64, g_l: f64, gp_l: f64) -> f64 {
    -(b * l).sin() * g_l / b - (b * l).cos() * gp_l / (b * b)
}

/// `int_L^inf sin(b t) g(t) dt` by two integrations by parts, same conditions.
fn tail_sin(b: f64, l: f64, g_l: f64, gp_l: f64) -> f64 {
    (b * l).cos() * g_l / b + (b * l).sin() * gp_l / (b * b)
}

// ---------------------------------------------------------------------------
// Cauchy kernel
// ---------------------------------------------------------------------------

fn cauchy_w(rho: f64, t: f64) -> f64 {
    rho / (std::f64::consts::PI * (t * t + rho * rho))
}

/// J(c) for the Cauchy kernel.
fn j_cauchy(rho: f64, c: f64, eps: f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    if c == 0.0 {
        // total mass: quadrature plus the exact arctangent tail
        let l = 16.0 * rho.max(1.0);
        let (q, _) = adaptive_gk(&|t| cauchy_w(rho, t), 0.0, l, eps / 4.0, MAX_PANELS, &seeds(l, 0.0, rho))?;
        return Ok(2.0 * (q + (rho / l).atan() / pi));
    }
    // remainder bound 2 rho / (pi c^2 L^3) <= eps/2
    let l = (2.0 * rho / (pi * c * c * (eps / 2.0)))
        .powf(1.0 / 3.0)
        .max(8.0 * rho.max(1.0));
    let f = |t: f64| (c * t).cos() * cauchy_w(rho, t);
    let (q, _) = adaptive_gk(&f, 0.0, l, eps / 4.0, MAX_PANELS, &seeds(l, c, rho))?;
    let g_l = cauchy_w(rho, l);
    let gp_l = -rho * 2.0 * l / (pi * (l * l + rho * rho).powi(2));
    Ok(2.0 * (q + tail_cos(c, l, g_l, gp_l)))
}

/// One sine piece of M for the Cauchy kernel: `2 int_0^inf sin(b t) w1(t)/t dt`.
fn s_cauchy(rho: f64, b: f64, eps: f64) -> Result<f64> {
    if b == 0.0 {
        return Ok(0.0);
    }
    let pi = std::f64::consts::PI;
    // |g'(L)| <= 4 rho / (pi L^4) for L >= rho
    let l = (4.0 * rho / (pi * b * b * (eps / 2.0)))
        .powf(0.25)
        .max(8.0 * rho.max(1.0));
    let f = |t: f64| {
        if t == 0.0 {
            b * cauchy_w(rho, 0.0)
        } else {
            (b * t).sin() / t * cauchy_w(rho, t)
        }
    };
    let (q, _) = adaptive_gk(&f, 0.0, l, eps / 4.0, MAX_PANELS, &seeds(l, b, rho))?;
    let g_l = cauchy_w(rho, l) / l;
    let gp_l = -(rho / pi) * (3.0 * l * l + rho * rho) / (l * l * (l * l + rho * rho).powi(2));
    Ok(2.0 * (q + tail_sin(b, l, g_l, gp_l)))
}

fn p_cauchy(rho: f64, eps: f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    // oscillatory remainder <= 6 rho / (pi L^5)
    let l = (6.0 * rho / (pi * eps / 2.0)).powf(0.2).max(8.0 * rho.max(1.0));
    let f = |t: f64| {
        // series below 0.01 avoids 1 - cos cancellation noise
        let sq = if t.abs() < 0.01 {
            let t2 = t * t;
            1.0 - t2 / 12.0 + t2 * t2 / 360.0
        } else {
            2.0 * (1.0 - t.cos()) / (t * t)
        };
        sq * cauchy_w(rho, t)
    };
    let (q, _) = adaptive_gk(&f, 0.0, l, eps / 4.0, MAX_PANELS, &seeds(l, 1.0, rho))?;
    // smooth tail of 2 w1 / t^2, elementary antiderivative
    let smooth = (2.0 / (pi * rho)) * (1.0 / l - (rho / l).atan() / rho);
    // oscillatory tail of -2 cos(t) w1 / t^2
    let g_l = 2.0 * cauchy_w(rho, l) / (l * l);
    let gp_l = -(2.0 * rho / pi) * (4.0 * l * l * l + 2.0 * l * rho * rho)
        / (l * l * (l * l + rho * rho)).powi(2);
    let osc = -tail_cos(1.0, l, g_l, gp_l);
    Ok(2.0 * (q + smooth + osc))
}

// ---------------------------------------------------------------------------
// Triangular kernel
// ---------------------------------------------------------------------------

/// `int_R (1 - cos(a t)) / (pi t^2) dt` by quadrature (closed form would be |a|).
fn i_bar(a: f64, eps: f64) -> Result<f64> {
    if a == 0.0 {
        return Ok(0.0);
    }
    let pi = std::f64::consts::PI;
    let l = (2.0 / (a * a * (eps * pi / 4.0))).powf(1.0 / 3.0).max(8.0);
    let f = |t: f64| {
        let at = a * t;
        if at.abs() < 0.01 {
            let s = at * at;
            a * a / 2.0 * (1.0 - s / 12.0 + s * s / 360.0)
        } else {
            (1.0 - at.cos()) / (t * t)
        }
    };
    let (q, _) = adaptive_gk(&f, 0.0, l, eps * pi / 8.0, MAX_PANELS, &seeds(l, a, 1.0))?;
    let tail = 1.0 / l - tail_cos(a, l, 1.0 / (l * l), -2.0 / (l * l * l));
    Ok(2.0 / pi * (q + tail))
}

fn j_triangular(c: f64, eps: f64) -> Result<f64> {
    Ok(-i_bar(c, eps / 2.0)? + 0.5 * i_bar(c + 1.0, eps / 2.0)? + 0.5 * i_bar((c - 1.0).abs(), eps / 2.0)?)
}

/// One sine family member for the triangular kernel:
/// `(2/pi) int_0^inf [sin(bt) - sin((b+1)t)/2 - sin((b-1)t)/2] / t^3 dt`.
fn s_triangular(b: f64, eps: f64) -> Result<f64> {
    if b == 0.0 {
        return Ok(0.0);
    }
    let pi = std::f64::consts::PI;
    let pieces = [(1.0, b), (-0.5, b + 1.0), (-0.5, b - 1.0)];
    let beta_min = pieces
        .iter()
        .map(|&(_, f)| f.abs())
        .filter(|&f| f > 0.0)
        .fold(f64::INFINITY, f64::min);
    let l = (3.0 / (beta_min * beta_min * (eps * pi / 6.0)))
        .powf(0.25)
        .max(8.0);
    let f = |t: f64| {
        if t.abs() * (b.abs() + 1.0) < 0.02 {
            // series of the combined numerator; the raw form loses ~t^3 digits
            b / 2.0 - b * (2.0 * b * b + 1.0) * t * t / 24.0
        } else {
            ((b * t).sin() - 0.5 * ((b + 1.0) * t).sin() - 0.5 * ((b - 1.0) * t).sin())
                / (t * t * t)
        }
    };
    let (q, _) = adaptive_gk(&f, 0.0, l, eps * pi / 8.0, MAX_PANELS, &seeds(l, b + 1.0, 1.0))?;
    let mut tails = 0.0;
    for &(coef, beta) in &pieces {
        if beta == 0.0 {
            continue;
        }
        let sgn = beta.signum();
        let ab = beta.abs();
        tails += coef * sgn * tail_sin(ab, l, 1.0 / (l * l * l), -3.0 / (l * l * l * l));
    }
    Ok(2.0 / pi * (q + tails))
}

fn p_triangular(eps: f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let l = (4.0 / (eps * pi / 6.0)).powf(0.2).max(8.0);
    let f = |t: f64| {
        if t.abs() < 0.01 {
            let t2 = t * t;
            0.25 * (1.0 - t2 / 6.0 + t2 * t2 / 80.0)
        } else {
            let u = 1.0 - t.cos();
            u * u / (t * t * t * t)
        }
    };
    let (q, _) = adaptive_gk(&f, 0.0, l, eps * pi / 8.0, MAX_PANELS, &seeds(l, 2.0, 1.0))?;
    let smooth = 0.5 / (l * l * l);
    let osc = -2.0 * tail_cos(1.0, l, 1.0 / l.powi(4), -4.0 / l.powi(5))
        + 0.5 * tail_cos(2.0, l, 1.0 / l.powi(4), -4.0 / l.powi(5));
    Ok(4.0 / pi * (q + smooth + osc))
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

fn j_one(kernel: WeightKernel, c: f64, eps: f64) -> Result<f64> {
    match kernel {
        WeightKernel::Cauchy { rho } => j_cauchy(rho, c, eps),
        WeightKernel::Triangular => {
            if c == 0.0 {
                // J(0) is the weight mass; quadrature through i_bar pieces
                Ok(i_bar(1.0, eps)?) // (1 - cos t)/(pi t^2) integrates to 1
            } else {
                j_triangular(c, eps)
            }
        }
    }
}

fn m_one(kernel: WeightKernel, x: f64, eps: f64) -> Result<f64> {
    match kernel {
        WeightKernel::Cauchy { rho } => Ok(s_cauchy(rho, x, eps / 2.0)? + s_cauchy(rho, 1.0 - x, eps / 2.0)?),
        WeightKernel::Triangular => Ok(s_triangular(x, eps / 2.0)? + s_triangular(1.0 - x, eps / 2.0)?),
    }
}

fn p_one(kernel: WeightKernel, eps: f64) -> Result<f64> {
    match kernel {
        WeightKernel::Cauchy { rho } => p_cauchy(rho, eps),
        WeightKernel::Triangular => p_triangular(eps),
    }
}

/// Quadrature evaluation of the weighted L2 statistic for any product kernel.
pub fn weighted_l2_oracle(
    pattern: &PointPattern,
    kernel: WeightKernel,
    abs_tol: f64,
) -> Result<f64> {
    let n = pattern.len();
    let dim = pattern.dim();
    if dim > 2 {
        return Err(CfError::InvalidArgument(
            "the quadrature oracle supports D <= 2 only".into(),
        ));
    }
    let eps = abs_tol / (8.0 * n as f64 * dim as f64);
    let pts = pattern.points();

    // pair term: (1/n) sum_{j,k} prod_d J(|x_jd - x_kd|)
    let j_diag = j_one(kernel, 0.0, eps)?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| ((j + 1)..n).map(move |k| (j, k)))
        .collect();
    let pair_products: Result<Vec<f64>> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let mut prod = 1.0;
            for d in 0..dim {
                prod *= j_one(kernel, (pts[j][d] - pts[k][d]).abs(), eps)?;
            }
            Ok(prod)
        })
        .collect();
    let pair_sum: f64 = pair_products?.iter().sum();
    let term1 = (n as f64 * j_diag.powi(dim as i32) + 2.0 * pair_sum) / n as f64;

    // cross term: -2 sum_j prod_d M(x_jd)
    let cross: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut prod = 1.0;
            for d in 0..dim {
                prod *= m_one(kernel, pts[j][d], eps)?;
            }
            Ok(prod)
        })
        .collect();
    let term2 = 2.0 * cross?.iter().sum::<f64>();

    let term3 = n as f64 * p_one(kernel, eps)?.powi(dim as i32);

    Ok(term1 - term2 + term3)
}

/// Quadrature oracle for the Cauchy-weight statistic.
pub fn cf_statistic_oracle(pattern: &PointPattern, rho: Resolution, abs_tol: f64) -> Result<f64> {
    weighted_l2_oracle(pattern, WeightKernel::Cauchy { rho: rho.get() }, abs_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::null_moments::alpha;
    use crate::patterns::PointPattern;
    use crate::statistic::{cf_statistic, omega_bar_squared, triangular_statistic, Resolution};

    // 1-d building blocks against their analytic values
    #[test]
    fn cauchy_cosine_transform_matches_exponential() {
        for &rho in &[0.5, 1.0, 5.0, 20.0] {
            for &c in &[0.0, 1e-3, 0.2, 0.7, 1.0] {
                let j = j_cauchy(rho, c, 1e-9).unwrap();
                let exact = (-rho * c).exp();
                assert!(
                    (j - exact).abs() < 5e-9,
                    "rho={rho} c={c}: {j} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn cauchy_cross_term_matches_boundary_form() {
        for &rho in &[0.5, 2.0, 10.0] {
            for &x in &[0.0, 0.25, 0.5, 0.93] {
                let m = m_one(WeightKernel::Cauchy { rho }, x, 1e-9).unwrap();
                let exact = (2.0 - (-rho * x).exp() - (-rho * (1.0 - x)).exp()) / rho;
                assert!(
                    (m - exact).abs() < 5e-9,
                    "rho={rho} x={x}: {m} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn cauchy_weight_term_matches_alpha() {
        for &rho in &[0.5, 1.0, 8.0] {
            let p = p_cauchy(rho, 1e-9).unwrap();
            assert!((p - alpha(rho)).abs() < 5e-9, "rho={rho}: {p}");
        }
    }

    #[test]
    fn triangular_blocks_match_closed_forms() {
        // J_tri(c) = (1-c)^+, M_tri(x) = 1/2 + x - x^2, P_tri = 2/3
        for &c in &[0.0, 0.3, 0.99, 1.0] {
            let j = j_one(WeightKernel::Triangular, c, 1e-9).unwrap();
            let exact = (1.0 - c).max(0.0);
            assert!((j - exact).abs() < 1e-8, "c={c}: {j} vs {exact}");
        }
        for &x in &[0.1, 0.5, 0.8] {
            let m = m_one(WeightKernel::Triangular, x, 1e-9).unwrap();
            let exact = 0.5 + x - x * x;
            assert!((m - exact).abs() < 1e-8, "x={x}: {m} vs {exact}");
        }
        let p = p_one(WeightKernel::Triangular, 1e-9).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-8, "{p}");
    }

    #[test]
    fn oracle_agrees_with_closed_form_center_point() {
        let p = PointPattern::new(vec![vec![0.5, 0.5]], 2).unwrap();
        let r = Resolution::new(1.0).unwrap();
        let oracle = cf_statistic_oracle(&p, r, 1e-7).unwrap();
        let closed = cf_statistic(&p, r);
        assert!((oracle - closed).abs() < 1e-6, "{oracle} vs {closed}");
    }

    #[test]
    fn oracle_agrees_on_two_point_pattern() {
        let p = PointPattern::new(vec![vec![0.25, 0.25], vec![0.75, 0.75]], 2).unwrap();
        let r = Resolution::new(2.0).unwrap();
        let oracle = cf_statistic_oracle(&p, r, 1e-7).unwrap();
        let closed = cf_statistic(&p, r);
        assert!((oracle - closed).abs() < 1e-6, "{oracle} vs {closed}");
    }

    #[test]
    fn oracle_near_zero_for_tiny_rho() {
        let p = PointPattern::new(vec![vec![0.2, 0.6], vec![0.7, 0.1]], 2).unwrap();
        let r = Resolution::new(1e-6).unwrap();
        let oracle = cf_statistic_oracle(&p, r, 1e-6).unwrap();
        assert!(oracle.abs() < 1e-4, "{oracle}");
    }

    #[test]
    fn oracle_one_dimensional_pattern() {
        let p = PointPattern::new(vec![vec![0.3], vec![0.31], vec![0.9]], 1).unwrap();
        let r = Resolution::new(5.0).unwrap();
        let oracle = cf_statistic_oracle(&p, r, 1e-8).unwrap();
        let closed = cf_statistic(&p, r);
        assert!((oracle - closed).abs() < 1e-7, "{oracle} vs {closed}");
    }

    #[test]
    fn triangular_oracle_matches_four_omega_bar() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let p = PointPattern::new(pts, 2).unwrap();
        let oracle = weighted_l2_oracle(&p, WeightKernel::Triangular, 1e-7).unwrap();
        let tri = triangular_statistic(&p).unwrap();
        assert!((oracle - tri).abs() < 1e-6, "{oracle} vs {tri}");
        assert!((oracle / 4.0 - omega_bar_squared(&p).unwrap()).abs() < 1e-6);
    }
}
