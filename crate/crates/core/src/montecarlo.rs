//! Simulation estimates of the gain-loss moments, and an exhaustive
//! enumeration oracle for small discrete models.
//!
//! Paths are generated in fixed-size batches. Batch `b` draws from
//! `rng_for(seed, b)` and the per-batch moments are merged in batch order,
//! so estimates are bitwise identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{terminal_gain_unchecked, ControllerConfig};
use crate::error::{Error, Result};
use crate::returns::{rng_for, ReturnModel};

/// Default path count for single-asset estimates.
pub const DEFAULT_PATHS: usize = 50_000;
/// Default path count per asset in multi-asset runs.
pub const DEFAULT_PORTFOLIO_PATHS: usize = 20_000;

const BATCH_SIZE: usize = 1024;

/// Monte-Carlo estimate of the moments of `G(alpha, K, stage)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub k_gain: f64,
    pub mean: f64,
    /// Unbiased (1/(n-1)) sample variance.
    pub variance: f64,
    pub std: f64,
    pub std_error_of_mean: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub stage: usize,
}

/// Running count/mean/sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n / n;
        self.m2 += other.m2 + d * d * self.n * other.n / n;
        self.n = n;
    }
}

/// Estimates the gain-loss moments for several gains on shared paths.
///
/// Every gain sees exactly the same return paths (common random numbers),
/// which keeps the estimated curves smooth in `K`.
pub fn estimate_gain_stats_many(
    model: &ReturnModel,
    alpha: f64,
    gains: &[f64],
    v0: f64,
    stage: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if stage < 1 {
        return Err(Error::StageTooSmall { stage, min: 1 });
    }
    if n_paths < 2 {
        return Err(Error::TooFewPaths { n_paths, min: 2 });
    }
    let configs = gains
        .iter()
        .map(|&k| ControllerConfig::new(alpha, k, v0, model.bounds()))
        .collect::<Result<Vec<_>>>()?;
    let sampler = model.sampler();

    let n_batches = n_paths.div_ceil(BATCH_SIZE);
    let per_batch: Vec<Vec<Moments>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, b as u64);
            let paths_here = BATCH_SIZE.min(n_paths - b * BATCH_SIZE);
            let mut path = vec![0.0; stage];
            let mut acc = vec![Moments::default(); configs.len()];
            for _ in 0..paths_here {
                sampler.fill(&mut rng, &mut path);
                for (m, cfg) in acc.iter_mut().zip(&configs) {
                    m.push(terminal_gain_unchecked(cfg, &path));
                }
            }
            acc
        })
        .collect();

    let mut total = vec![Moments::default(); configs.len()];
    for batch in &per_batch {
        for (t, m) in total.iter_mut().zip(batch) {
            t.merge(m);
        }
    }

    Ok(total
        .iter()
        .zip(gains)
        .map(|(m, &k_gain)| {
            let variance = (m.m2 / (m.n - 1.0)).max(0.0);
            let std = variance.sqrt();
            McEstimate {
                k_gain,
                mean: m.mean,
                variance,
                std,
                std_error_of_mean: std / m.n.sqrt(),
                n_paths,
                seed,
                stage,
            }
        })
        .collect())
}

/// Monte-Carlo estimate of the moments of `G(alpha, K, stage)`.
pub fn estimate_gain_stats(
    model: &ReturnModel,
    alpha: f64,
    k_gain: f64,
    v0: f64,
    stage: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    estimate_gain_stats_many(model, alpha, &[k_gain], v0, stage, n_paths, seed)
        .map(|mut v| v.remove(0))
}

/// Neumaier summation; millions of leaf terms with heavy cancellation.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Exact moments from full enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactStats {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub stage: usize,
    /// Number of enumerated return sequences.
    pub paths: usize,
}

/// Upper limit on `atoms^stage` for [`estimate_exact_small`] (8 atoms at stage 8).
pub const ENUMERATION_LIMIT: f64 = 16_777_216.0;

/// Enumerates every return sequence of length `stage` with its probability
/// and computes the exact mean and variance of the gain-loss.
///
/// Each path's gain is evaluated as `V0 (alpha expm1(sum ln1p(K x))
/// + (1 - alpha) expm1(sum ln1p(-K x)))`, independently of both the
/// recursion in [`crate::dynamics`] and the closed forms in
/// [`crate::analytics`].
pub fn estimate_exact_small(
    model: &ReturnModel,
    alpha: f64,
    k_gain: f64,
    v0: f64,
    stage: usize,
) -> Result<ExactStats> {
    let cfg = ControllerConfig::new(alpha, k_gain, v0, model.bounds())?;
    let atoms = model.pmf().atoms();
    let count = (atoms.len() as f64).powi(stage as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            paths: count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let logs: Vec<(f64, f64, f64)> = atoms
        .iter()
        .map(|a| {
            (
                a.weight,
                (cfg.k_gain() * a.value).ln_1p(),
                (-cfg.k_gain() * a.value).ln_1p(),
            )
        })
        .collect();
    let gain = |up: f64, down: f64| v0 * (alpha * up.exp_m1() + (1.0 - alpha) * down.exp_m1());

    fn walk(
        logs: &[(f64, f64, f64)],
        depth: usize,
        p: f64,
        up: f64,
        down: f64,
        leaf: &mut dyn FnMut(f64, f64, f64),
    ) {
        if depth == 0 {
            leaf(p, up, down);
            return;
        }
        for &(w, lu, ld) in logs {
            walk(logs, depth - 1, p * w, up + lu, down + ld, leaf);
        }
    }

    let mut mean = CompensatedSum::default();
    let mut paths = 0usize;
    walk(&logs, stage, 1.0, 0.0, 0.0, &mut |p, u, d| {
        mean.add(p * gain(u, d));
        paths += 1;
    });
    let mean = mean.value();
    let mut variance = CompensatedSum::default();
    walk(&logs, stage, 1.0, 0.0, 0.0, &mut |p, u, d| {
        let dev = gain(u, d) - mean;
        variance.add(p * dev * dev);
    });
    let variance = variance.value();
    Ok(ExactStats {
        mean,
        variance,
        std: variance.sqrt(),
        stage,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{expected_gain, variance_gain};
    use crate::returns::EmpiricalPmf;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn zero_gain_is_exactly_flat() {
        let m = ReturnModel::two_point(-0.1, 0.1, 0.5).unwrap();
        let e = estimate_gain_stats(&m, 0.5, 0.0, 1.0, 10, 5000, 1).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.variance, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = ReturnModel::uniform_grid(-0.2, 0.2, 7).unwrap();
        let a = estimate_gain_stats(&m, 0.5, 0.6, 1.0, 12, 3000, 77).unwrap();
        let b = estimate_gain_stats(&m, 0.5, 0.6, 1.0, 12, 3000, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn many_matches_single() {
        let m = ReturnModel::uniform_grid(-0.2, 0.2, 7).unwrap();
        let many = estimate_gain_stats_many(&m, 0.5, &[0.2, 0.6], 1.0, 12, 3000, 5).unwrap();
        let one = estimate_gain_stats(&m, 0.5, 0.6, 1.0, 12, 3000, 5).unwrap();
        assert_eq!(many[1], one);
    }

    #[test]
    fn symmetric_two_point_mean_near_zero() {
        let m = ReturnModel::two_point(-0.1, 0.1, 0.5).unwrap();
        let e = estimate_gain_stats(&m, 0.5, 1.0, 1.0, 2, 1_000_000, 3).unwrap();
        assert!(e.mean.abs() <= 5.0 * e.std_error_of_mean, "{e:?}");
        assert!((e.variance - 1e-4).abs() < 5e-6);
    }

    #[test]
    fn exact_point_mass_has_no_variance() {
        let m = ReturnModel::from_pmf(EmpiricalPmf::new([(0.05, 1.0)]).unwrap());
        let s = estimate_exact_small(&m, 0.5, 1.0, 1.0, 3).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.paths, 1);
    }

    #[test]
    fn exact_four_paths_match_closed_form() {
        let m = ReturnModel::two_point(-0.1, 0.1, 0.5).unwrap();
        let s = estimate_exact_small(&m, 0.5, 1.0, 1.0, 2).unwrap();
        assert_eq!(s.paths, 4);
        // hand enumeration: G over {(1.1,1.1),(1.1,0.9),(0.9,1.1),(0.9,0.9)}
        let g = |x: f64, y: f64| 0.5 * (1.0 + x) * (1.0 + y) + 0.5 * (1.0 - x) * (1.0 - y) - 1.0;
        let gs = [g(0.1, 0.1), g(0.1, -0.1), g(-0.1, 0.1), g(-0.1, -0.1)];
        let mean = gs.iter().sum::<f64>() / 4.0;
        assert!((s.mean - mean).abs() < 1e-15);
        assert!(s.mean.abs() < 1e-15);
        let cf = variance_gain(0.5, 1.0, 2, 0.0, 0.01, 1.0).unwrap();
        assert!(rel_close(s.variance, cf, 1e-10), "{} vs {cf}", s.variance);
    }

    #[test]
    fn exact_eight_paths_match_closed_form() {
        let m = ReturnModel::two_point(-0.1, 0.2, 0.25).unwrap();
        let s = estimate_exact_small(&m, 0.25, 0.5, 1.0, 3).unwrap();
        assert_eq!(s.paths, 8);
        let mean = expected_gain(0.25, 0.5, 3, 0.125, 1.0).unwrap();
        let var = variance_gain(0.25, 0.5, 3, 0.125, 0.016875, 1.0).unwrap();
        assert!(rel_close(s.mean, mean, 1e-10), "{} vs {mean}", s.mean);
        assert!(rel_close(s.variance, var, 1e-10), "{} vs {var}", s.variance);
    }

    #[test]
    fn exact_rejects_huge_enumerations() {
        let m = ReturnModel::uniform_grid(-0.2, 0.2, 8).unwrap();
        assert!(matches!(
            estimate_exact_small(&m, 0.5, 0.5, 1.0, 9),
            Err(Error::TooLarge { .. })
        ));
    }
}
