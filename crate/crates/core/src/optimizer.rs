//! Robust optimal gain selection and the mean/std curve of the balanced
//! controller.
//!
//! With `alpha = 1/2` fixed, both the mean and the std of the gain-loss are
//! strictly increasing in `K` whenever `mu != 0` and `sigma > 0`. The best
//! gain under a std ceiling `s` is therefore the unique `K*` with
//! `std(K*) = s`, found here by bisection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytics::{expected_gain, std_gain};
use crate::error::{Error, Result};
use crate::montecarlo::{estimate_gain_stats, estimate_gain_stats_many};
use crate::returns::{EmpiricalPmf, ReturnModel};

/// Default std tolerance for closed-form solves.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default std tolerance for Monte-Carlo backed solves.
pub const DEFAULT_MC_TOL: f64 = 1e-3;
/// Minimum path count accepted by the Monte-Carlo solver.
pub const MIN_SOLVER_PATHS: usize = 1_000;

const BALANCED: f64 = 0.5;
const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k_gain: f64,
    pub std: f64,
    pub mean: f64,
}

/// Sampled curve `K -> (std(G), E[G])` at a fixed stage, `alpha = 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStdCurve {
    pub points: Vec<CurvePoint>,
    pub stage: usize,
    pub alpha: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub v0: f64,
}

impl MeanStdCurve {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.k_gain).collect()
    }

    /// Grid point whose std is closest to `std`.
    pub fn nearest_std(&self, std: f64) -> Option<&CurvePoint> {
        self.points.iter().min_by(|a, b| {
            (a.std - std)
                .abs()
                .partial_cmp(&(b.std - std).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    /// Both coordinates strictly increase along the grid.
    pub fn is_strictly_increasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].std > w[0].std && w[1].mean > w[0].mean)
    }

    /// Inverse map `E[G] -> K` by linear interpolation between grid points.
    ///
    /// Returns `None` when the means are not strictly increasing or `mean`
    /// falls outside the sampled range.
    pub fn gain_for_mean(&self, mean: f64) -> Option<f64> {
        if !self.points.windows(2).all(|w| w[1].mean > w[0].mean) {
            return None;
        }
        let i = self.points.partition_point(|p| p.mean < mean);
        if i == 0 {
            return (self.points[0].mean == mean).then_some(self.points[0].k_gain);
        }
        let hi = self.points.get(i)?;
        let lo = &self.points[i - 1];
        let t = (mean - lo.mean) / (hi.mean - lo.mean);
        Some(lo.k_gain + t * (hi.k_gain - lo.k_gain))
    }

    /// Writes `k_gain,std,mean`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k_gain", "std", "mean"])?;
        for p in &self.points {
            w.write_record([p.k_gain.to_string(), p.std.to_string(), p.mean.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

fn check_k_max(k_max: f64) -> Result<()> {
    if k_max > 0.0 && k_max <= 1.0 {
        Ok(())
    } else {
        Err(Error::InadmissibleGain {
            k_gain: k_max,
            k_max: 1.0,
        })
    }
}

fn gain_grid(k_max: f64, grid_size: usize) -> Vec<f64> {
    let last = grid_size - 1;
    (0..grid_size)
        .map(|i| {
            if i == last {
                k_max
            } else {
                k_max * i as f64 / last as f64
            }
        })
        .collect()
}

/// Closed-form curve on `grid_size` equally spaced gains in `[0, k_max]`.
pub fn build_curve(
    mu: f64,
    sigma2: f64,
    v0: f64,
    stage: usize,
    k_max: f64,
    grid_size: usize,
) -> Result<MeanStdCurve> {
    if stage <= 1 {
        return Err(Error::StageTooSmall { stage, min: 2 });
    }
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    check_k_max(k_max)?;
    let points = gain_grid(k_max, grid_size)
        .into_iter()
        .map(|k| {
            Ok(CurvePoint {
                k_gain: k,
                std: std_gain(BALANCED, k, stage, mu, sigma2, v0)?,
                mean: expected_gain(BALANCED, k, stage, mu, v0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanStdCurve {
        points,
        stage,
        alpha: BALANCED,
        mu,
        sigma2,
        v0,
    })
}

/// Monte-Carlo curve over the model's admissible range, with all gains
/// evaluated on the same simulated paths.
pub fn build_curve_empirical(
    model: &ReturnModel,
    v0: f64,
    stage: usize,
    grid_size: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MeanStdCurve> {
    if stage <= 1 {
        return Err(Error::StageTooSmall { stage, min: 2 });
    }
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    let grid = gain_grid(model.bounds().k_max(), grid_size);
    let est = estimate_gain_stats_many(model, BALANCED, &grid, v0, stage, n_paths, seed)?;
    Ok(MeanStdCurve {
        points: est
            .iter()
            .map(|e| CurvePoint {
                k_gain: e.k_gain,
                std: e.std,
                mean: e.mean,
            })
            .collect(),
        stage,
        alpha: BALANCED,
        mu: model.mu(),
        sigma2: model.sigma2(),
        v0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalGainResult {
    pub k_star: f64,
    pub achieved_std: f64,
    pub expected_gain: f64,
    pub target_std: f64,
    /// Std at the largest admissible gain; the feasibility ceiling.
    pub s_max: f64,
    pub stage: usize,
    pub iterations: usize,
}

/// Result of [`bisect_increasing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Solves `f(x) = target` for increasing `f` on `[lo, hi]`, assuming
/// `f(lo) <= target <= f(hi)`.
///
/// Stops when `|f(x) - target| <= tol` or the bracket collapses to a few
/// ulps. Errors from `f` are propagated.
pub fn bisect_increasing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    tol: f64,
) -> Result<Bisection>
where
    F: FnMut(f64) -> Result<f64>,
{
    let floor = 4.0 * f64::EPSILON * hi.abs().max(1.0);
    let mut iterations = 0;
    let mut best = Bisection {
        x: 0.5 * (lo + hi),
        value: f64::NAN,
        iterations,
    };
    while iterations < MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let value = f(mid)?;
        iterations += 1;
        best = Bisection {
            x: mid,
            value,
            iterations,
        };
        if (value - target).abs() <= tol || hi - lo <= floor {
            break;
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

fn check_target(target_std: f64, tol: f64) -> Result<()> {
    if !(target_std > 0.0) {
        return Err(Error::TargetNonpositive(target_std));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    Ok(())
}

/// Largest expected gain subject to `std(G) <= target_std`, closed form.
pub fn solve_optimal_gain(
    mu: f64,
    sigma2: f64,
    v0: f64,
    stage: usize,
    k_max: f64,
    target_std: f64,
    tol: f64,
) -> Result<OptimalGainResult> {
    if stage <= 1 {
        return Err(Error::StageTooSmall { stage, min: 2 });
    }
    check_target(target_std, tol)?;
    check_k_max(k_max)?;
    if mu == 0.0 {
        return Err(Error::ZeroDrift);
    }
    if sigma2 == 0.0 {
        return Err(Error::ZeroVolatility);
    }
    let std_at = |k: f64| std_gain(BALANCED, k, stage, mu, sigma2, v0);
    let s_max = std_at(k_max)?;
    if target_std >= s_max {
        return Err(Error::TargetTooLarge {
            target: target_std,
            s_max,
        });
    }
    let b = bisect_increasing(std_at, 0.0, k_max, target_std, tol)?;
    Ok(OptimalGainResult {
        k_star: b.x,
        achieved_std: b.value,
        expected_gain: expected_gain(BALANCED, b.x, stage, mu, v0)?,
        target_std,
        s_max,
        stage,
        iterations: b.iterations,
    })
}

/// Same problem with the std of `G` estimated by simulation from `pmf`.
///
/// Every probe reuses `seed`, so all gains are evaluated on identical paths.
/// The reported expected gain is the exact mean under the PMF's moments.
pub fn solve_optimal_gain_empirical(
    pmf: &EmpiricalPmf,
    v0: f64,
    stage: usize,
    target_std: f64,
    tol: f64,
    n_paths: usize,
    seed: u64,
) -> Result<OptimalGainResult> {
    if stage <= 1 {
        return Err(Error::StageTooSmall { stage, min: 2 });
    }
    check_target(target_std, tol)?;
    if n_paths < MIN_SOLVER_PATHS {
        return Err(Error::TooFewPaths {
            n_paths,
            min: MIN_SOLVER_PATHS,
        });
    }
    let model = ReturnModel::from_pmf(pmf.clone());
    if model.mu() == 0.0 {
        return Err(Error::ZeroDrift);
    }
    if model.sigma2() == 0.0 {
        return Err(Error::ZeroVolatility);
    }
    let k_max = model.bounds().k_max();
    let std_at =
        |k: f64| estimate_gain_stats(&model, BALANCED, k, v0, stage, n_paths, seed).map(|e| e.std);
    let s_max = std_at(k_max)?;
    if target_std >= s_max {
        return Err(Error::TargetTooLarge {
            target: target_std,
            s_max,
        });
    }

    // Track the bracket's std values to detect noise breaking monotonicity.
    let mut bracket = ((0.0, 0.0), (k_max, s_max));
    let b = bisect_increasing(
        |k| {
            let s = std_at(k)?;
            let ((lo_k, lo_s), (hi_k, hi_s)) = bracket;
            if s < lo_s || s > hi_s {
                return Err(Error::NonMonotoneEstimate { k_gain: k });
            }
            if s < target_std {
                bracket.0 = (k, s);
            } else {
                bracket.1 = (k, s);
            }
            debug_assert!(lo_k <= k && k <= hi_k);
            Ok(s)
        },
        0.0,
        k_max,
        target_std,
        tol,
    )?;
    Ok(OptimalGainResult {
        k_star: b.x,
        achieved_std: b.value,
        expected_gain: expected_gain(BALANCED, b.x, stage, model.mu(), v0)?,
        target_std,
        s_max,
        stage,
        iterations: b.iterations,
    })
}
