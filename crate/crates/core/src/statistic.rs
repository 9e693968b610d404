//! The CF test statistic with Cauchy weight, in closed form, plus the
//! triangular-kernel statistic that recovers Zimmerman's omega-bar-squared.
//!
//! Only exponentials appear in the Cauchy closed form:
//!
//! ```text
//! Delta = (1/n) sum_{j,k} e^{-rho L1(x_j, x_k)}
//!       - (2/rho^D) sum_j prod_d (2 - e^{-rho x_jd} - e^{-rho (1 - x_jd)})
//!       + n alpha(rho)^D
//! ```
//!
//! The statistic can be marginally negative through floating error only; it
//! is never clamped here.

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::null_moments::alpha;
use crate::patterns::PointPattern;

/// Resolution parameter of the Cauchy weight: larger values emphasize
/// shorter-range spatial interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution(f64);

impl Resolution {
    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho.is_finite() {
            Ok(Resolution(rho))
        } else {
            Err(CfError::InvalidArgument(format!(
                "resolution must be positive and finite, got {rho}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Recommended resolution range `[1, 2 pi n^{1/2}]` for D = 2.
pub fn recommended_rho_max(n: usize) -> f64 {
    2.0 * std::f64::consts::PI * (n as f64).sqrt()
}

/// One-shot evaluation of the statistic.
pub fn cf_statistic(pattern: &PointPattern, rho: Resolution) -> f64 {
    PairCache::new(pattern).statistic(rho)
}

/// Precomputed pairwise L1 distances, reused when sweeping a rho grid.
#[derive(Debug, Clone)]
pub struct PairCache {
    n: usize,
    dim: usize,
    coords: Vec<f64>,        // row-major n x dim
    pair_l1: Vec<f64>,       // upper triangle, j < k
}

impl PairCache {
    pub fn new(pattern: &PointPattern) -> Self {
        let n = pattern.len();
        let dim = pattern.dim();
        let mut coords = Vec::with_capacity(n * dim);
        for p in pattern.points() {
            coords.extend_from_slice(p);
        }
        let mut pair_l1 = Vec::with_capacity(n * (n - 1) / 2);
        for j in 0..n {
            for k in (j + 1)..n {
                let mut d = 0.0;
                for t in 0..dim {
                    d += (coords[j * dim + t] - coords[k * dim + t]).abs();
                }
                pair_l1.push(d);
            }
        }
        PairCache { n, dim, coords, pair_l1 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Closed-form Delta at one resolution. Cost O(n^2) on the cached
    /// distances; the diagonal contributes xi(0) = 1 per point.
    pub fn statistic(&self, rho: Resolution) -> f64 {
        let rho = rho.get();
        let n = self.n as f64;

        let mut pair_sum = 0.0;
        for &d in &self.pair_l1 {
            pair_sum += (-rho * d).exp();
        }
        let term1 = (n + 2.0 * pair_sum) / n;

        let mut point_sum = 0.0;
        for j in 0..self.n {
            let mut prod = 1.0;
            for t in 0..self.dim {
                let x = self.coords[j * self.dim + t];
                // 2 - e^{-rho x} - e^{-rho (1-x)}, stable for small rho
                prod *= -((-rho * x).exp_m1()) - (-rho * (1.0 - x)).exp_m1();
            }
            point_sum += prod;
        }
        let term2 = 2.0 / rho.powi(self.dim as i32) * point_sum;

        let term3 = n * alpha(rho).powi(self.dim as i32);

        term1 - term2 + term3
    }

    /// Delta over a grid of resolutions, reusing the distance cache.
    pub fn statistic_grid(&self, rhos: &[Resolution]) -> Vec<f64> {
        rhos.iter().map(|&r| self.statistic(r)).collect()
    }
}

/// Zimmerman's omega-bar-squared for D = 2, computed through the triangular
/// kernel identity `Delta_tri = 4 omega_bar^2`.
pub fn omega_bar_squared(pattern: &PointPattern) -> Result<f64> {
    Ok(triangular_statistic(pattern)? / 4.0)
}

/// The CF statistic with the triangular product kernel
/// `xi(x) = prod_d (1 - |x_d|)^+` (the squared-modulus-of-uniform-CF weight).
pub fn triangular_statistic(pattern: &PointPattern) -> Result<f64> {
    if pattern.dim() != 2 {
        return Err(CfError::DimensionMismatch {
            expected: 2,
            got: pattern.dim(),
        });
    }
    let n = pattern.len() as f64;
    let pts = pattern.points();

    let mut pair_sum = 0.0;
    for j in 0..pts.len() {
        for k in 0..pts.len() {
            pair_sum += (1.0 - (pts[j][0] - pts[k][0]).abs()) * (1.0 - (pts[j][1] - pts[k][1]).abs());
        }
    }
    let term1 = pair_sum / n;

    let mut point_sum = 0.0;
    for p in pts {
        point_sum += (p[0] * p[0] - p[0] - 0.5) * (p[1] * p[1] - p[1] - 0.5);
    }
    let term2 = 2.0 * point_sum;

    Ok(term1 - term2 + 4.0 / 9.0 * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::PointPattern;
    use proptest::prelude::*;

    fn pat(points: Vec<Vec<f64>>) -> PointPattern {
        let dim = points[0].len();
        PointPattern::new(points, dim).unwrap()
    }

    #[test]
    fn single_center_point_matches_hand_value() {
        // n=1 at (0.5, 0.5), rho = 1: 1 - 2 (2 - 2 e^{-1/2})^2 + (2/e)^2
        let p = pat(vec![vec![0.5, 0.5]]);
        let expect = 1.0 - 2.0 * (2.0 - 2.0 * (-0.5f64).exp()).powi(2)
            + (2.0 / std::f64::consts::E).powi(2);
        let got = cf_statistic(&p, Resolution::new(1.0).unwrap());
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn vanishes_as_rho_to_zero() {
        let p = pat(vec![
            vec![0.1, 0.4],
            vec![0.9, 0.2],
            vec![0.3, 0.7],
            vec![0.6, 0.6],
        ]);
        let d = cf_statistic(&p, Resolution::new(1e-6).unwrap());
        assert!(d.abs() < 1e-4, "{d}");
    }

    #[test]
    fn never_strongly_negative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen()]).collect();
            let p = pat(pts);
            for &rho in &[0.01, 1.0, 10.0, 100.0] {
                let d = cf_statistic(&p, Resolution::new(rho).unwrap());
                assert!(d > -1e-9 * n as f64, "rho={rho} n={n}: {d}");
            }
        }
    }

    #[test]
    fn grid_matches_single_evaluations() {
        let p = pat(vec![vec![0.2, 0.3], vec![0.8, 0.5], vec![0.4, 0.9]]);
        let cache = PairCache::new(&p);
        let rhos: Vec<Resolution> = [0.5, 1.0, 5.0, 25.0]
            .iter()
            .map(|&r| Resolution::new(r).unwrap())
            .collect();
        let grid = cache.statistic_grid(&rhos);
        for (i, &r) in rhos.iter().enumerate() {
            assert_eq!(grid[i], cf_statistic(&p, r));
        }
    }

    #[test]
    fn omega_bar_single_point_hand_value() {
        // Delta_tri at (0.5,0.5): 1 - 2 (0.25 - 0.5 - 0.5)^2 + 4/9
        let p = pat(vec![vec![0.5, 0.5]]);
        let tri = triangular_statistic(&p).unwrap();
        let expect = 1.0 - 2.0 * 0.5625 + 4.0 / 9.0;
        assert!((tri - expect).abs() < 1e-15);
        assert!((omega_bar_squared(&p).unwrap() - expect / 4.0).abs() < 1e-15);
    }

    #[test]
    fn omega_bar_requires_two_dimensions() {
        let p = pat(vec![vec![0.5]]);
        assert!(omega_bar_squared(&p).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_point_permutation(
            xs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2..12),
            rho in 0.1f64..40.0,
        ) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a, b]).collect();
            let mut rev = pts.clone();
            rev.reverse();
            let d1 = cf_statistic(&pat(pts), Resolution::new(rho).unwrap());
            let d2 = cf_statistic(&pat(rev), Resolution::new(rho).unwrap());
            prop_assert!((d1 - d2).abs() <= 1e-10 * d1.abs().max(1.0));
        }

        #[test]
        fn invariant_under_reflection(
            xs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..12),
            rho in 0.1f64..40.0,
        ) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a, b]).collect();
            let refl: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0 - p[0], 1.0 - p[1]]).collect();
            let d1 = cf_statistic(&pat(pts), Resolution::new(rho).unwrap());
            let d2 = cf_statistic(&pat(refl), Resolution::new(rho).unwrap());
            prop_assert!((d1 - d2).abs() <= 1e-9 * d1.abs().max(1.0));
        }

        #[test]
        fn omega_bar_reflection_symmetry(
            xs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..12),
        ) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a, b]).collect();
            let refl: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0 - p[0], 1.0 - p[1]]).collect();
            let w1 = omega_bar_squared(&pat(pts)).unwrap();
            let w2 = omega_bar_squared(&pat(refl)).unwrap();
            prop_assert!((w1 - w2).abs() <= 1e-10 * w1.abs().max(1.0));
        }
    }
}
