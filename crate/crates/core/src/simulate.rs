//! Point-process generators for the null and the alternative hypotheses, and
//! Monte Carlo estimation of critical values.
//!
//! Every generator is a pure function of its parameters and a 64-bit seed.
//! Parallel harnesses assign one counter stream per replicate, so results do
//! not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::patterns::PointPattern;

/// Proposal/attempt cap for the rejection-based generators.
const ATTEMPT_CAP: usize = 1_000_000;

/// One independent RNG stream of a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of one simulated process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimSpec {
    Csr { n: usize, dim: usize, seed: u64 },
    Matern { n: usize, mu: f64, kappa: f64, r: f64, seed: u64 },
    Ssi { n: usize, delta: f64, seed: u64 },
    InhomPoisson { n: usize, theta1: f64, theta2: f64, seed: u64 },
}

impl SimSpec {
    pub fn generate(&self) -> Result<PointPattern> {
        match *self {
            SimSpec::Csr { n, dim, seed } => Ok(sim_csr(n, dim, seed)),
            SimSpec::Matern { n, mu, kappa, r, seed } => sim_matern(n, mu, kappa, r, seed),
            SimSpec::Ssi { n, delta, seed } => sim_ssi(n, delta, seed),
            SimSpec::InhomPoisson { n, theta1, theta2, seed } => {
                sim_inhom(n, theta1, theta2, seed)
            }
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            SimSpec::Csr { n, .. }
            | SimSpec::Matern { n, .. }
            | SimSpec::Ssi { n, .. }
            | SimSpec::InhomPoisson { n, .. } => n,
        }
    }

    pub fn with_seed(&self, seed: u64) -> SimSpec {
        let mut s = self.clone();
        match &mut s {
            SimSpec::Csr { seed: sd, .. }
            | SimSpec::Matern { seed: sd, .. }
            | SimSpec::Ssi { seed: sd, .. }
            | SimSpec::InhomPoisson { seed: sd, .. } => *sd = seed,
        }
        s
    }
}

/// `n` i.i.d. uniform points in the unit cube.
pub fn sim_csr(n: usize, dim: usize, seed: u64) -> PointPattern {
    let mut rng = stream_rng(seed, 0);
    sim_csr_with(&mut rng, n, dim)
}

pub fn sim_csr_with<R: Rng>(rng: &mut R, n: usize, dim: usize) -> PointPattern {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    PointPattern::new(points, dim).expect("uniform draws lie in the cube")
}

/// Matern cluster process observed in the unit square and conditioned on
/// `n` points: parents form a Poisson process with intensity `kappa` per
/// unit area over the window dilated by the cluster radius (so clusters
/// whose parents sit outside still contribute, as for the stationary
/// process), each parent gets Poisson(mu) offspring uniform in the
/// radius-r disk, offspring outside the unit square are dropped, and whole
/// patterns regenerate until the in-window count equals `n`.
pub fn sim_matern(n: usize, mu: f64, kappa: f64, r: f64, seed: u64) -> Result<PointPattern> {
    let mut rng = stream_rng(seed, 0);
    sim_matern_with(&mut rng, n, mu, kappa, r)
}

pub fn sim_matern_with<R: Rng>(
    rng: &mut R,
    n: usize,
    mu: f64,
    kappa: f64,
    r: f64,
) -> Result<PointPattern> {
    if !(r > 0.0 && mu > 0.0 && kappa > 0.0) {
        return Err(CfError::InvalidArgument(
            "matern needs r > 0, mu > 0, kappa > 0".into(),
        ));
    }
    let side = 1.0 + 2.0 * r;
    let parent_count = Poisson::new(kappa * side * side)
        .map_err(|e| CfError::InvalidArgument(format!("kappa: {e}")))?;
    let offspring_count =
        Poisson::new(mu).map_err(|e| CfError::InvalidArgument(format!("mu: {e}")))?;
    let two_pi = 2.0 * std::f64::consts::PI;

    for _ in 0..ATTEMPT_CAP {
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(n + 8);
        let parents = parent_count.sample(rng) as usize;
        for _ in 0..parents {
            let px = rng.gen::<f64>() * side - r;
            let py = rng.gen::<f64>() * side - r;
            let kids = offspring_count.sample(rng) as usize;
            for _ in 0..kids {
                let rad = r * rng.gen::<f64>().sqrt();
                let ang = two_pi * rng.gen::<f64>();
                let x = px + rad * ang.cos();
                let y = py + rad * ang.sin();
                if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
                    points.push(vec![x, y]);
                }
                if points.len() > n {
                    break;
                }
            }
            if points.len() > n {
                break;
            }
        }
        if points.len() == n {
            return PointPattern::new(points, 2);
        }
    }
    Err(CfError::SimulationInfeasible(format!(
        "matern(n={n}, mu={mu}, kappa={kappa}, r={r}): count never hit n in {ATTEMPT_CAP} attempts"
    )))
}

/// Simple sequential inhibition: uniform proposals, rejected within distance
/// `delta` of an accepted point, until `n` points stand.
pub fn sim_ssi(n: usize, delta: f64, seed: u64) -> Result<PointPattern> {
    let mut rng = stream_rng(seed, 0);
    sim_ssi_with(&mut rng, n, delta)
}

pub fn sim_ssi_with<R: Rng>(rng: &mut R, n: usize, delta: f64) -> Result<PointPattern> {
    if !(delta > 0.0) {
        return Err(CfError::InvalidArgument("ssi needs delta > 0".into()));
    }
    let d2 = delta * delta;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..ATTEMPT_CAP {
        let x = rng.gen::<f64>();
        let y = rng.gen::<f64>();
        if points
            .iter()
            .all(|&(px, py)| (px - x) * (px - x) + (py - y) * (py - y) >= d2)
        {
            points.push((x, y));
            if points.len() == n {
                return PointPattern::new(points.iter().map(|&(x, y)| vec![x, y]).collect(), 2);
            }
        }
    }
    Err(CfError::SimulationInfeasible(format!(
        "ssi packing infeasible for n={n}, delta={delta}"
    )))
}

/// Inhomogeneous Poisson alternative: `n` i.i.d. points with density
/// proportional to `(theta1 - (theta1-1) x1)(theta2 - (theta2-1) x2)`,
/// by rejection against the envelope at the origin.
pub fn sim_inhom(n: usize, theta1: f64, theta2: f64, seed: u64) -> Result<PointPattern> {
    let mut rng = stream_rng(seed, 0);
    sim_inhom_with(&mut rng, n, theta1, theta2)
}

pub fn sim_inhom_with<R: Rng>(
    rng: &mut R,
    n: usize,
    theta1: f64,
    theta2: f64,
) -> Result<PointPattern> {
    if theta1 < 1.0 || theta2 < 1.0 {
        return Err(CfError::InvalidArgument("inhom needs theta >= 1".into()));
    }
    let envelope = theta1 * theta2;
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let x = rng.gen::<f64>();
        let y = rng.gen::<f64>();
        let lambda = (theta1 - (theta1 - 1.0) * x) * (theta2 - (theta2 - 1.0) * y);
        if rng.gen::<f64>() * envelope <= lambda {
            points.push(vec![x, y]);
        }
    }
    PointPattern::new(points, 2)
}

/// Empirical `alpha/2` and `1 - alpha/2` quantiles of a statistic over CSR
/// replicates, with one RNG stream per replicate.
pub fn mc_critical_values<F>(
    statistic: F,
    n: usize,
    dim: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&PointPattern) -> f64 + Sync,
{
    if reps < 1000 {
        return Err(CfError::InvalidArgument(format!(
            "critical values need at least 1000 replicates, got {reps}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CfError::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mut values = mc_null_sample(&statistic, n, dim, reps, seed);
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        empirical_quantile(&values, alpha / 2.0),
        empirical_quantile(&values, 1.0 - alpha / 2.0),
    ))
}

/// The raw null sample behind `mc_critical_values`, for harnesses that need
/// the whole distribution.
pub fn mc_null_sample<F>(statistic: &F, n: usize, dim: usize, reps: usize, seed: u64) -> Vec<f64>
where
    F: Fn(&PointPattern) -> f64 + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep as u64 + 1);
            let pattern = sim_csr_with(&mut rng, n, dim);
            statistic(&pattern)
        })
        .collect()
}

/// Linear-interpolation empirical quantile on a sorted sample.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::null_moments::null_mean;
    use crate::statistic::{cf_statistic, PairCache, Resolution};

    #[test]
    fn csr_is_deterministic_per_seed() {
        let a = sim_csr(50, 2, 42);
        let b = sim_csr(50, 2, 42);
        let c = sim_csr(50, 2, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csr_coordinate_means_are_centered() {
        let p = sim_csr(100_000, 2, 7);
        for d in 0..2 {
            let mean: f64 = p.points().iter().map(|q| q[d]).sum::<f64>() / p.len() as f64;
            assert!((mean - 0.5).abs() < 0.005, "dim {d}: {mean}");
        }
    }

    #[test]
    fn matern_paper_triple_produces_exact_count() {
        let n = 75;
        let (r, mu, kappa) = (0.075, (n as f64).powf(0.25), (n as f64).powf(0.75));
        for seed in 0..5 {
            let p = sim_matern(n, mu, kappa, r, seed).unwrap();
            assert_eq!(p.len(), n);
            assert_eq!(p.dim(), 2);
        }
    }

    #[test]
    fn matern_marginals_are_uniform() {
        // the dilated parent window makes the observed process stationary,
        // so single-coordinate marginals are exactly uniform
        let mut xs = 0.0;
        let mut count = 0.0;
        for seed in 0..300 {
            let p = sim_matern(20, 4.0, 6.0, 0.25, seed).unwrap();
            xs += p.points().iter().map(|q| q[0]).sum::<f64>();
            count += p.len() as f64;
        }
        let mean = xs / count;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn ssi_respects_inhibition_distance() {
        let delta = 0.025;
        let p = sim_ssi(75, delta, 3).unwrap();
        assert_eq!(p.len(), 75);
        let pts = p.points();
        for j in 0..pts.len() {
            for k in (j + 1)..pts.len() {
                let d = ((pts[j][0] - pts[k][0]).powi(2) + (pts[j][1] - pts[k][1]).powi(2)).sqrt();
                assert!(d >= delta, "pair ({j},{k}) at distance {d}");
            }
        }
    }

    #[test]
    fn ssi_packing_failure_is_reported() {
        match sim_ssi(600, 0.2, 1) {
            Err(CfError::SimulationInfeasible(msg)) => {
                assert!(msg.contains("600") && msg.contains("0.2"));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn inhom_marginal_mean_matches_integral() {
        // theta = (4, 10): E[x2] = 2 / 5.5
        let p = sim_inhom(100_000, 4.0, 10.0, 11).unwrap();
        let mean: f64 = p.points().iter().map(|q| q[1]).sum::<f64>() / p.len() as f64;
        assert!((mean - 2.0 / 5.5).abs() < 0.01, "{mean}");
        // theta = 1 reduces to CSR: acceptance always
        let q = sim_inhom(1000, 1.0, 1.0, 12).unwrap();
        assert_eq!(q.len(), 1000);
        // the paper's settings all construct
        for &(t1, t2) in &[(1.0, 4.0), (4.0, 4.0), (4.0, 10.0)] {
            assert!(sim_inhom(25, t1, t2, 13).is_ok());
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SimSpec::Matern { n: 75, mu: 2.94, kappa: 25.5, r: 0.075, seed: 9 };
        let js = serde_json::to_string(&spec).unwrap();
        let back: SimSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(spec, back);
        assert!(js.contains("\"kind\":\"matern\""));
    }

    #[test]
    fn critical_values_bracket_alpha_half() {
        let stat = |p: &PointPattern| cf_statistic(p, Resolution::new(1.0).unwrap());
        let (lo, hi) = mc_critical_values(stat, 25, 2, 0.5, 2000, 99).unwrap();
        assert!(lo < hi);
        // quarters of the sample land outside each bound
        let sample = mc_null_sample(&stat, 25, 2, 2000, 99);
        let below = sample.iter().filter(|&&v| v < lo).count() as f64 / 2000.0;
        let above = sample.iter().filter(|&&v| v > hi).count() as f64 / 2000.0;
        assert!((below - 0.25).abs() < 0.03, "{below}");
        assert!((above - 0.25).abs() < 0.03, "{above}");
    }

    #[test]
    fn critical_values_independent_of_thread_count() {
        let stat = |p: &PointPattern| cf_statistic(p, Resolution::new(2.0).unwrap());
        let a = mc_critical_values(&stat, 20, 2, 0.1, 1500, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mc_critical_values(&stat, 20, 2, 0.1, 1500, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_se_shrinks_with_replicates() {
        // standard error of the upper critical value drops roughly like
        // 1/sqrt(reps)
        let stat = |p: &PointPattern| cf_statistic(p, Resolution::new(1.0).unwrap());
        let spread = |reps: usize| -> f64 {
            let vals: Vec<f64> = (0..24)
                .map(|s| mc_critical_values(&stat, 20, 2, 0.1, reps, 1000 + s).unwrap().1)
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let s1 = spread(1000);
        let s2 = spread(4000);
        let ratio = s1 / s2;
        assert!(
            ratio > 1.3 && ratio < 3.2,
            "expected ~2x shrink, got {ratio} ({s1} vs {s2})"
        );
    }

    #[test]
    fn matern_mean_statistic_sits_above_null_mean() {
        // quick seeded direction check; the full 3-sigma suite runs in the
        // acceptance tests
        let rho = Resolution::new(8.0).unwrap();
        let n = 75;
        let (r, mu, kappa) = (0.15, (n as f64).powf(1.0 / 3.0), (n as f64).powf(2.0 / 3.0));
        let mean: f64 = (0..400)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(777, s);
                let p = sim_matern_with(&mut rng, n, mu, kappa, r).unwrap();
                PairCache::new(&p).statistic(rho)
            })
            .sum::<f64>()
            / 400.0;
        assert!(mean > null_mean(8.0, 2), "{mean}");
    }
}
