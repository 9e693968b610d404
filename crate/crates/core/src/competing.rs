//! Classical CSR tests used as baselines: the L-test on the
//! isotropic-corrected K estimator and the Clark-Evans nearest-neighbour
//! test with the Donnelly edge adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::patterns::PointPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineName {
    LTest,
    ClarkEvans,
    OmegaBar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: BaselineName,
    pub statistic: f64,
    /// Monte Carlo calibrated when present; the baselines ship no analytic
    /// null here
    pub p_value: Option<f64>,
}

/// Proportion of the circle of radius `d` centred at `(x, y)` lying inside
/// the unit square. Exact for the radii the L-test uses (`d < 1/2`): at most
/// two adjacent edges are breached and corner overlaps subtract once.
fn circle_inside_proportion(x: f64, y: f64, d: f64) -> f64 {
    let edges = [x, 1.0 - x, y, 1.0 - y];
    let half_angle = |e: f64| -> f64 {
        if e < d {
            (e / d).acos()
        } else {
            0.0
        }
    };
    let a = [
        half_angle(edges[0]),
        half_angle(edges[1]),
        half_angle(edges[2]),
        half_angle(edges[3]),
    ];
    let mut exterior = 2.0 * (a[0] + a[1] + a[2] + a[3]);
    // adjacent edge pairs share the four corners
    for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        let corner_sq = edges[i] * edges[i] + edges[j] * edges[j];
        if corner_sq < d * d {
            exterior -= (a[i] + a[j] - 0.5 * std::f64::consts::PI).max(0.0);
        }
    }
    1.0 - exterior / (2.0 * std::f64::consts::PI)
}

/// Ripley's K estimator with isotropic edge correction on the unit square:
/// `K(r) = (1/n^2) sum_{j != k} 1{d_jk <= r} / w_jk`.
pub fn ripley_khat(pattern: &PointPattern, r: f64) -> Result<f64> {
    let cache = KhatCache::new(pattern)?;
    if !(r > 0.0 && r < std::f64::consts::SQRT_2) {
        return Err(CfError::InvalidArgument(format!(
            "khat radius must lie in (0, sqrt(2)), got {r}"
        )));
    }
    Ok(cache.khat(r))
}

/// Sorted pair distances with correction weights, shared by the K curve and
/// the L-test grid.
pub struct KhatCache {
    /// (distance, 1/w_j + 1/w_k) per unordered pair, ascending by distance
    pairs: Vec<(f64, f64)>,
    n: usize,
}

impl KhatCache {
    pub fn new(pattern: &PointPattern) -> Result<Self> {
        if pattern.dim() != 2 {
            return Err(CfError::DimensionMismatch {
                expected: 2,
                got: pattern.dim(),
            });
        }
        let pts = pattern.points();
        let n = pts.len();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for j in 0..n {
            for k in (j + 1)..n {
                let d = ((pts[j][0] - pts[k][0]).powi(2) + (pts[j][1] - pts[k][1]).powi(2)).sqrt();
                let wj = circle_inside_proportion(pts[j][0], pts[j][1], d);
                let wk = circle_inside_proportion(pts[k][0], pts[k][1], d);
                pairs.push((d, 1.0 / wj + 1.0 / wk));
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // prefix sums in place: pairs[i].1 becomes the cumulated weight
        let mut acc = 0.0;
        for p in pairs.iter_mut() {
            acc += p.1;
            p.1 = acc;
        }
        Ok(KhatCache { pairs, n })
    }

    pub fn khat(&self, r: f64) -> f64 {
        // binary search for the last pair with distance <= r
        let idx = self.pairs.partition_point(|&(d, _)| d <= r);
        if idx == 0 {
            0.0
        } else {
            self.pairs[idx - 1].1 / (self.n * self.n) as f64
        }
    }

    pub fn lhat(&self, r: f64) -> f64 {
        (self.khat(r) / std::f64::consts::PI).sqrt()
    }
}

/// Default upper range of the L statistic, `s = 1.25 / sqrt(n)`.
pub fn l_test_default_s(n: usize) -> f64 {
    1.25 / (n as f64).sqrt()
}

/// `L_m = sup_{r <= s} |Lhat(r) - r|` approximated on an even grid.
pub fn l_test(pattern: &PointPattern, s: Option<f64>, grid_size: usize) -> Result<BaselineResult> {
    let s = s.unwrap_or_else(|| l_test_default_s(pattern.len()));
    if !(s > 0.0) || grid_size == 0 {
        return Err(CfError::InvalidArgument(
            "l_test needs s > 0 and a non-empty grid".into(),
        ));
    }
    let cache = KhatCache::new(pattern)?;
    let mut sup = 0.0f64;
    for i in 1..=grid_size {
        let r = s * i as f64 / grid_size as f64;
        sup = sup.max((cache.lhat(r) - r).abs());
    }
    Ok(BaselineResult {
        name: BaselineName::LTest,
        statistic: sup,
        p_value: None,
    })
}

/// Clark-Evans z statistic with the Donnelly edge adjustment on the unit
/// square (perimeter 4, area 1): small values say aggregation, large ones
/// regularity.
pub fn clark_evans(pattern: &PointPattern) -> Result<BaselineResult> {
    if pattern.dim() != 2 {
        return Err(CfError::DimensionMismatch {
            expected: 2,
            got: pattern.dim(),
        });
    }
    let pts = pattern.points();
    let n = pts.len();
    if n < 2 {
        return Err(CfError::InvalidArgument("clark-evans needs n >= 2".into()));
    }
    let mut nn_sum = 0.0;
    for j in 0..n {
        let mut best = f64::INFINITY;
        for k in 0..n {
            if j == k {
                continue;
            }
            let d2 = (pts[j][0] - pts[k][0]).powi(2) + (pts[j][1] - pts[k][1]).powi(2);
            best = best.min(d2);
        }
        nn_sum += best.sqrt();
    }
    let dbar = nn_sum / n as f64;
    let nf = n as f64;
    let perimeter = 4.0;
    let expected = 0.5 / nf.sqrt() + (0.0514 + 0.041 / nf.sqrt()) * perimeter / nf;
    let variance = 0.070 / (nf * nf) + 0.037 * perimeter / nf.powf(2.5);
    Ok(BaselineResult {
        name: BaselineName::ClarkEvans,
        statistic: (dbar - expected) / variance.sqrt(),
        p_value: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::PointPattern;
    use crate::simulate::{sim_csr, stream_rng, sim_csr_with};
    use rayon::prelude::*;

    fn pat(points: Vec<Vec<f64>>) -> PointPattern {
        PointPattern::new(points, 2).unwrap()
    }

    #[test]
    fn weight_is_one_for_interior_circles() {
        assert!((circle_inside_proportion(0.5, 0.5, 0.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weight_quarter_at_corner_half_at_edge() {
        assert!((circle_inside_proportion(0.0, 0.0, 0.1) - 0.25).abs() < 1e-12);
        assert!((circle_inside_proportion(0.0, 0.5, 0.1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weight_matches_arc_construction_off_grid() {
        // centre (0.1, 0.5), radius 0.6: breaches left, top and bottom;
        // inside arc length worked out from the two constraints
        let p = circle_inside_proportion(0.1, 0.5, 0.6);
        let phi_x = (1.0f64 / 6.0).acos(); // cos phi >= -1/6 boundary
        let phi_y = (5.0f64 / 6.0).asin(); // |sin phi| <= 5/6 boundary
        let inside = 2.0 * phi_y.min(std::f64::consts::PI - phi_x);
        let expect = inside / (2.0 * std::f64::consts::PI);
        assert!((p - expect).abs() < 1e-12, "{p} vs {expect}");
    }

    #[test]
    fn khat_zero_when_no_pairs_in_range() {
        let p = pat(vec![vec![0.1, 0.1], vec![0.9, 0.9]]);
        assert_eq!(ripley_khat(&p, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn khat_two_interior_points() {
        let p = pat(vec![vec![0.45, 0.5], vec![0.55, 0.5]]);
        // both circles of radius 0.1 are interior, so w = 1
        let k = ripley_khat(&p, 0.2).unwrap();
        assert!((k - 0.5).abs() < 1e-12, "{k}");
    }

    #[test]
    fn khat_unbiased_under_csr() {
        let r = 0.1;
        let reps = 2000;
        let mean: f64 = (0..reps)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(21, s);
                let p = sim_csr_with(&mut rng, 100, 2);
                KhatCache::new(&p).unwrap().khat(r)
            })
            .sum::<f64>()
            / reps as f64;
        let expect = std::f64::consts::PI * r * r;
        assert!(
            ((mean - expect) / expect).abs() < 0.05,
            "mean {mean} vs {expect}"
        );
    }

    #[test]
    fn lhat_nondecreasing_in_r() {
        let p = sim_csr(60, 2, 5);
        let cache = KhatCache::new(&p).unwrap();
        let mut prev = 0.0;
        for i in 1..200 {
            let l = cache.lhat(0.25 * i as f64 / 200.0);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn l_test_default_ranges() {
        assert!((l_test_default_s(25) - 0.25).abs() < 1e-15);
        assert!((l_test_default_s(100) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn clusters_score_higher_than_near_grid_on_l() {
        // two tight clumps vs a jittered 5x5 grid
        let mut clumped = Vec::new();
        for i in 0..12 {
            clumped.push(vec![0.3 + 1e-3 * i as f64, 0.3]);
        }
        for i in 0..13 {
            clumped.push(vec![0.7 + 1e-3 * i as f64, 0.7]);
        }
        let mut grid = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                grid.push(vec![
                    0.1 + 0.2 * i as f64 + 1e-3 * ((i + j) % 2) as f64,
                    0.1 + 0.2 * j as f64,
                ]);
            }
        }
        let lc = l_test(&pat(clumped), None, 512).unwrap().statistic;
        let lg = l_test(&pat(grid), None, 512).unwrap().statistic;
        assert!(lc > lg, "clumped {lc} vs grid {lg}");
    }

    #[test]
    fn clark_evans_direction() {
        // tight clump: strongly negative; near-grid: positive
        let clump: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![0.5 + 1e-4 * i as f64, 0.5])
            .collect();
        let z = clark_evans(&pat(clump)).unwrap().statistic;
        assert!(z < -5.0, "{z}");
        let mut grid = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                grid.push(vec![0.1 + 0.2 * i as f64, 0.1 + 0.2 * j as f64]);
            }
        }
        let z = clark_evans(&pat(grid)).unwrap().statistic;
        assert!(z > 1.0, "{z}");
    }

    #[test]
    fn clark_evans_z_is_standard_normal_under_csr() {
        let reps = 5000;
        let zs: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(31, s);
                let p = sim_csr_with(&mut rng, 100, 2);
                clark_evans(&p).unwrap().statistic
            })
            .collect();
        let mean = zs.iter().sum::<f64>() / reps as f64;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (reps - 1) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.05, "sd {}", var.sqrt());
    }
}
