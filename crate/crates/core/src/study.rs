//! Shared harness for the simulation studies: the statistic battery of the
//! comparison tests, its Monte Carlo calibration under CSR, and per-cell
//! power estimation.

use rayon::prelude::*;

use crate::competing::{clark_evans, l_test};
use crate::patterns::PointPattern;
use crate::simulate::{empirical_quantile, sim_csr_with, stream_rng, SimSpec};
use crate::statistic::{omega_bar_squared, PairCache, Resolution};

/// Reported tests, in battery order.
pub const POWER_TESTS: [&str; 7] = [
    "cf_rho1",
    "cf_rho8",
    "cf_rho30",
    "omnibus",
    "omega_bar",
    "l_test",
    "clark_evans",
];

/// Index helpers into the battery/power arrays.
pub const CF_RHO1: usize = 0;
pub const CF_RHO8: usize = 1;
pub const CF_RHO30: usize = 2;
pub const OMNIBUS: usize = 3;
pub const OMEGA_BAR: usize = 4;
pub const L_TEST: usize = 5;
pub const CLARK_EVANS: usize = 6;

/// All comparison statistics for one pattern: Delta at rho = 1, 8, 30,
/// omega-bar^2, L_m, and the Clark-Evans z.
pub fn battery(pattern: &PointPattern) -> [f64; 6] {
    let cache = PairCache::new(pattern);
    let d1 = cache.statistic(Resolution::new(1.0).expect("rho"));
    let d8 = cache.statistic(Resolution::new(8.0).expect("rho"));
    let d30 = cache.statistic(Resolution::new(30.0).expect("rho"));
    let ob = omega_bar_squared(pattern).expect("2-d pattern");
    let lm = l_test(pattern, None, 512).expect("2-d pattern").statistic;
    let ce = clark_evans(pattern).expect("n >= 2").statistic;
    [d1, d8, d30, ob, lm, ce]
}

/// Null calibration of the battery: sorted CSR samples per statistic.
pub fn calibrate_battery(n: usize, reps: usize, seed: u64) -> Vec<Vec<f64>> {
    let rows: Vec<[f64; 6]> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep as u64 + 1);
            battery(&sim_csr_with(&mut rng, n, 2))
        })
        .collect();
    (0..6)
        .map(|i| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            col
        })
        .collect()
}

/// Two-sided Monte Carlo p-value of `x` against a sorted null sample.
pub fn mc_two_sided(sorted: &[f64], x: f64) -> f64 {
    let below = sorted.partition_point(|&v| v <= x);
    let above = sorted.len() - sorted.partition_point(|&v| v < x);
    let m = (sorted.len() + 1) as f64;
    let lower = (below + 1) as f64 / m;
    let upper = (above + 1) as f64 / m;
    (2.0 * lower.min(upper)).min(1.0)
}

/// The alternative processes of the power study for one sample size, with
/// the coupled Matern parameter ladder and the per-size inhibition
/// distances.
pub fn power_alternatives(n: usize) -> Vec<(String, SimSpec)> {
    let nf = n as f64;
    let mut alts = Vec::new();
    for (i, &r) in [0.075, 0.15, 0.30].iter().enumerate() {
        let (mu, kappa) = match i {
            0 => (nf.powf(0.25), nf.powf(0.75)),
            1 => (nf.powf(1.0 / 3.0), nf.powf(2.0 / 3.0)),
            _ => (nf.sqrt(), nf.sqrt()),
        };
        alts.push((
            format!("matern r={r}"),
            SimSpec::Matern { n, mu, kappa, r, seed: 0 },
        ));
    }
    let deltas: [f64; 3] = if n <= 50 { [0.05, 0.06, 0.07] } else { [0.015, 0.02, 0.025] };
    for delta in deltas {
        alts.push((format!("ssi delta={delta}"), SimSpec::Ssi { n, delta, seed: 0 }));
    }
    for (t1, t2) in [(1.0, 4.0), (4.0, 4.0), (4.0, 10.0)] {
        alts.push((
            format!("inhom theta=({t1},{t2})"),
            SimSpec::InhomPoisson { n, theta1: t1, theta2: t2, seed: 0 },
        ));
    }
    alts
}

pub struct PowerTally {
    /// rejection counts in `POWER_TESTS` order
    pub rejections: [usize; 7],
    pub completed: usize,
    pub failures: usize,
}

impl PowerTally {
    pub fn power(&self, test: usize) -> f64 {
        self.rejections[test] as f64 / self.completed.max(1) as f64
    }

    pub fn se(&self, test: usize) -> f64 {
        let p = self.power(test);
        (p * (1.0 - p) / self.completed.max(1) as f64).sqrt()
    }
}

/// Rejection counts over `reps` draws of one alternative, against
/// pre-calibrated null samples. CF tests, omega-bar and Clark-Evans are
/// two-sided at level alpha; the omnibus combines the three CF p-values by
/// Bonferroni; the L-test rejects for large values.
pub fn power_cell(
    spec: &SimSpec,
    reps: usize,
    alpha: f64,
    null_sorted: &[Vec<f64>],
    seed: u64,
) -> PowerTally {
    let results: Vec<Option<[bool; 7]>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep as u64 + 1);
            let pattern = match spec {
                SimSpec::Matern { n, mu, kappa, r, .. } => {
                    crate::simulate::sim_matern_with(&mut rng, *n, *mu, *kappa, *r)
                }
                SimSpec::Ssi { n, delta, .. } => crate::simulate::sim_ssi_with(&mut rng, *n, *delta),
                SimSpec::InhomPoisson { n, theta1, theta2, .. } => {
                    crate::simulate::sim_inhom_with(&mut rng, *n, *theta1, *theta2)
                }
                SimSpec::Csr { n, dim, .. } => Ok(sim_csr_with(&mut rng, *n, *dim)),
            };
            let pattern = match pattern {
                Ok(p) => p,
                Err(_) => return None,
            };
            let stats = battery(&pattern);
            let mut reject = [false; 7];
            let mut cf_ps = [0.0f64; 3];
            for i in 0..3 {
                cf_ps[i] = mc_two_sided(&null_sorted[i], stats[i]);
                reject[i] = cf_ps[i] <= alpha;
            }
            let omni = (3.0 * cf_ps.iter().cloned().fold(f64::INFINITY, f64::min)).min(1.0);
            reject[OMNIBUS] = omni <= alpha;
            reject[OMEGA_BAR] = mc_two_sided(&null_sorted[3], stats[3]) <= alpha;
            let l_hi = empirical_quantile(&null_sorted[4], 1.0 - alpha);
            reject[L_TEST] = stats[4] > l_hi;
            reject[CLARK_EVANS] = mc_two_sided(&null_sorted[5], stats[5]) <= alpha;
            Some(reject)
        })
        .collect();
    let mut tally = PowerTally { rejections: [0; 7], completed: 0, failures: 0 };
    for r in results {
        match r {
            Some(flags) => {
                tally.completed += 1;
                for (slot, &f) in tally.rejections.iter_mut().zip(flags.iter()) {
                    *slot += f as usize;
                }
            }
            None => tally.failures += 1,
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_cell_rejects_near_alpha() {
        let null = calibrate_battery(25, 4000, 17);
        let spec = SimSpec::Csr { n: 25, dim: 2, seed: 0 };
        let tally = power_cell(&spec, 2000, 0.05, &null, 23);
        assert_eq!(tally.failures, 0);
        for test in [CF_RHO1, OMEGA_BAR, L_TEST, CLARK_EVANS] {
            let p = tally.power(test);
            assert!(
                (p - 0.05).abs() < 0.02,
                "{}: {p}",
                POWER_TESTS[test]
            );
        }
    }

    #[test]
    fn mc_two_sided_conventions() {
        let sorted: Vec<f64> = (1..=99).map(|i| i as f64).collect();
        // center of the sample: p = 1
        assert_eq!(mc_two_sided(&sorted, 50.0), 1.0);
        // far outside
        assert!(mc_two_sided(&sorted, 1000.0) <= 0.021);
    }

    #[test]
    fn alternatives_cover_the_study_design() {
        let alts = power_alternatives(75);
        assert_eq!(alts.len(), 9);
        assert!(alts.iter().any(|(l, _)| l.contains("0.075")));
        assert!(alts.iter().any(|(l, _)| l.contains("0.025")));
        assert!(alts.iter().any(|(l, _)| l.contains("(4,10)")));
    }
}
