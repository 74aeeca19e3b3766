//! Out-of-sample workflow: fit the empirical PMF on a training price
//! segment, select the gain, then replay the realised returns of a later
//! segment.

use serde::{Deserialize, Serialize};

use crate::dynamics::{audit_cash_financing, simulate, AccountTrajectory, ControllerConfig};
use crate::error::{Error, Result};
use crate::optimizer::{solve_optimal_gain_empirical, OptimalGainResult};
use crate::portfolio::{
    optimize_portfolio, run_portfolio, AssetController, AssetTarget, PortfolioConfig,
    PortfolioTrajectory,
};
use crate::returns::{pmf_from_returns, PriceSeries, ReturnBounds};

/// Solver settings shared by single- and multi-asset backtests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Stage at which the std constraint is imposed; `None` means the
    /// number of training returns.
    pub stage: Option<usize>,
    pub tol: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Summary of the training segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub ticker: String,
    pub n_returns: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub training: TrainingSummary,
    pub optimal: OptimalGainResult,
    pub v0: f64,
    pub terminal_gain: f64,
    pub max_cash_ratio: f64,
    #[serde(skip_serializing)]
    pub trajectory: AccountTrajectory,
}

fn fit(train: &PriceSeries) -> Result<(TrainingSummary, crate::returns::EmpiricalPmf)> {
    let returns = train.returns();
    let pmf = pmf_from_returns(&returns)?;
    let summary = TrainingSummary {
        ticker: train.ticker().to_string(),
        n_returns: returns.len(),
        x_min: pmf.min(),
        x_max: pmf.max(),
        mu: pmf.mean(),
        sigma2: pmf.variance(),
    };
    Ok((summary, pmf))
}

/// Replay bounds cover both the training support and the realised test
/// returns, so out-of-sample moves beyond the training range are still
/// checked for admissibility.
fn replay_bounds(train: &TrainingSummary, test_returns: &[f64]) -> Result<ReturnBounds> {
    let fitted = ReturnBounds::new(train.x_min, train.x_max)?;
    Ok(fitted.union(&ReturnBounds::of_returns(test_returns)?))
}

pub fn backtest_single(
    train: &PriceSeries,
    test: &PriceSeries,
    v0: f64,
    target_std: f64,
    settings: &FitSettings,
) -> Result<BacktestReport> {
    let (training, pmf) = fit(train)?;
    let stage = settings.stage.unwrap_or(training.n_returns);
    let optimal = solve_optimal_gain_empirical(
        &pmf,
        v0,
        stage,
        target_std,
        settings.tol,
        settings.n_paths,
        settings.seed,
    )?;
    let path = test.returns();
    let bounds = replay_bounds(&training, &path)?;
    let cfg = ControllerConfig::balanced(optimal.k_star, v0, bounds)?;
    let trajectory = simulate(&cfg, &path)?;
    let audit = audit_cash_financing(&trajectory, optimal.k_star);
    if !audit.holds {
        return Err(Error::Internal(format!(
            "cash-financing ratio {} exceeds gain {}",
            audit.max_ratio, optimal.k_star
        )));
    }
    Ok(BacktestReport {
        training,
        optimal,
        v0,
        terminal_gain: trajectory.terminal_gain(),
        max_cash_ratio: audit.max_ratio,
        trajectory,
    })
}

/// One asset of a multi-asset backtest.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSegments {
    pub train: PriceSeries,
    pub test: PriceSeries,
    /// Std ceiling per unit of allocated capital.
    pub target_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioBacktestReport {
    pub training: Vec<TrainingSummary>,
    pub optimal: Vec<OptimalGainResult>,
    pub v0: f64,
    pub terminal_gain: f64,
    pub terminal_gain_per_asset: Vec<f64>,
    pub max_leverage: f64,
    #[serde(skip_serializing)]
    pub trajectory: PortfolioTrajectory,
}

pub fn backtest_portfolio(
    assets: &[AssetSegments],
    v0: f64,
    settings: &FitSettings,
) -> Result<PortfolioBacktestReport> {
    if assets.is_empty() {
        return Err(Error::Empty);
    }
    let fitted = assets
        .iter()
        .enumerate()
        .map(|(i, a)| fit(&a.train).map_err(Error::for_asset(i)))
        .collect::<Result<Vec<_>>>()?;
    let stage = match settings.stage {
        Some(s) => s,
        None => {
            let n = fitted[0].0.n_returns;
            if let Some((index, f)) = fitted.iter().enumerate().find(|(_, f)| f.0.n_returns != n) {
                return Err(Error::LengthMismatch {
                    index,
                    len: f.0.n_returns,
                    expected: n,
                });
            }
            n
        }
    };
    let targets: Vec<AssetTarget> = fitted
        .iter()
        .zip(assets)
        .map(|((_, pmf), a)| AssetTarget {
            pmf: pmf.clone(),
            target_std: a.target_std,
        })
        .collect();
    let optimal = optimize_portfolio(
        &targets,
        v0,
        stage,
        settings.tol,
        settings.n_paths,
        settings.seed,
    )?;

    let paths: Vec<Vec<f64>> = assets.iter().map(|a| a.test.returns()).collect();
    let controllers = fitted
        .iter()
        .zip(&paths)
        .zip(&optimal)
        .enumerate()
        .map(|(i, (((summary, _), path), opt))| {
            Ok(AssetController {
                label: summary.ticker.clone(),
                bounds: replay_bounds(summary, path).map_err(Error::for_asset(i))?,
                k_gain: opt.k_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let config = PortfolioConfig::new(controllers, v0)?;
    let trajectory = run_portfolio(&config, &paths)?;
    Ok(PortfolioBacktestReport {
        training: fitted.into_iter().map(|(s, _)| s).collect(),
        optimal,
        v0,
        terminal_gain: trajectory.terminal_gain(),
        terminal_gain_per_asset: trajectory
            .per_asset
            .iter()
            .map(|t| t.terminal_gain())
            .collect(),
        max_leverage: trajectory.max_leverage(),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(name: &str, prices: &[f64]) -> PriceSeries {
        PriceSeries::new(name, prices.to_vec(), None).unwrap()
    }

    fn wobbly(n: usize, drift: f64) -> Vec<f64> {
        let mut p = vec![100.0];
        for i in 0..n {
            let x = drift + if i % 3 == 0 { 0.03 } else { -0.012 } + 0.001 * (i % 5) as f64;
            p.push(p[i] * (1.0 + x));
        }
        p
    }

    #[test]
    fn flat_test_segment_gives_zero_gain() {
        let train = series("T", &wobbly(40, 0.002));
        let test = series("T", &[50.0; 20]);
        let settings = FitSettings {
            stage: None,
            tol: 1e-3,
            n_paths: 2000,
            seed: 9,
        };
        let r = backtest_single(&train, &test, 1.0, 0.02, &settings).unwrap();
        assert!(r.trajectory.gain_loss.iter().all(|&g| g == 0.0));
        assert!(r.optimal.k_star > 0.0);
        assert_eq!(r.training.n_returns, 40);
    }

    #[test]
    fn portfolio_backtest_adds_up() {
        let a = AssetSegments {
            train: series("A", &wobbly(30, 0.002)),
            test: series("A", &wobbly(15, 0.004)),
            target_std: 0.02,
        };
        let b = AssetSegments {
            train: series("B", &wobbly(30, -0.001)),
            test: series("B", &wobbly(15, -0.003)),
            target_std: 0.01,
        };
        let settings = FitSettings {
            stage: None,
            tol: 1e-3,
            n_paths: 2000,
            seed: 4,
        };
        let r = backtest_portfolio(&[a, b], 100.0, &settings).unwrap();
        let sum: f64 = r.terminal_gain_per_asset.iter().sum();
        assert!((sum - r.terminal_gain).abs() < 1e-12);
        let k_max = r.optimal.iter().map(|o| o.k_star).fold(0.0, f64::max);
        assert!(r.max_leverage <= k_max + 1e-12);
    }
}
