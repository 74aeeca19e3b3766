//! Multi-asset extension: equal capital per asset, one balanced controller
//! per asset, gains added up.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, AccountTrajectory, ControllerConfig};
use crate::error::{Error, Result};
use crate::optimizer::{solve_optimal_gain_empirical, OptimalGainResult};
use crate::returns::{rng_for, EmpiricalPmf, ReturnBounds, ReturnModel};

/// One asset's controller: its return bounds and feedback gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetController {
    pub label: String,
    pub bounds: ReturnBounds,
    pub k_gain: f64,
}

/// `m` balanced controllers sharing `v0` equally; each book starts at `v0 / (2m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioConfig {
    assets: Vec<AssetController>,
    v0: f64,
    controllers: Vec<ControllerConfig>,
}

impl PortfolioConfig {
    pub fn new(assets: Vec<AssetController>, v0: f64) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::Empty);
        }
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::InvalidAccount(v0));
        }
        let per_asset = v0 / assets.len() as f64;
        let controllers = assets
            .iter()
            .enumerate()
            .map(|(i, a)| {
                ControllerConfig::balanced(a.k_gain, per_asset, a.bounds)
                    .map_err(Error::for_asset(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            assets,
            v0,
            controllers,
        })
    }

    pub fn assets(&self) -> &[AssetController] {
        &self.assets
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn controllers(&self) -> &[ControllerConfig] {
        &self.controllers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioTrajectory {
    pub labels: Vec<String>,
    pub per_asset: Vec<AccountTrajectory>,
    pub total_gain_loss: Vec<f64>,
    /// `sum_i |u_i(k)| / V(k)`; diagnostic only, never enforced.
    pub leverage: Vec<f64>,
}

impl PortfolioTrajectory {
    pub fn terminal_gain(&self) -> f64 {
        *self.total_gain_loss.last().expect("stage 0 present")
    }

    pub fn max_leverage(&self) -> f64 {
        self.leverage.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `k,gain_<label>...,total_gain_loss,leverage_ratio`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend(self.labels.iter().map(|l| format!("gain_{l}")));
        header.push("total_gain_loss".into());
        header.push("leverage_ratio".into());
        w.write_record(&header)?;
        for k in 0..self.total_gain_loss.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.per_asset.iter().map(|t| t.gain_loss[k].to_string()));
            row.push(self.total_gain_loss[k].to_string());
            row.push(self.leverage[k].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Runs every asset's controller on its own return path and aggregates.
pub fn run_portfolio(config: &PortfolioConfig, paths: &[Vec<f64>]) -> Result<PortfolioTrajectory> {
    if paths.len() != config.len() {
        return Err(Error::InvalidArgument(format!(
            "{} return paths for {} assets",
            paths.len(),
            config.len()
        )));
    }
    let expected = paths[0].len();
    if let Some((index, p)) = paths.iter().enumerate().find(|(_, p)| p.len() != expected) {
        return Err(Error::LengthMismatch {
            index,
            len: p.len(),
            expected,
        });
    }
    let per_asset = config
        .controllers
        .par_iter()
        .zip(paths.par_iter())
        .enumerate()
        .map(|(i, (cfg, path))| simulate(cfg, path).map_err(Error::for_asset(i)))
        .collect::<Result<Vec<_>>>()?;

    let stages = expected + 1;
    let mut total_gain_loss = vec![0.0; stages];
    let mut leverage = vec![0.0; stages];
    for k in 0..stages {
        let mut gain = 0.0;
        let mut exposure = 0.0;
        let mut value = 0.0;
        for t in &per_asset {
            gain += t.gain_loss[k];
            exposure += t.controls[k].u.abs();
            value += t.v_total[k];
        }
        total_gain_loss[k] = gain;
        leverage[k] = if value > 0.0 { exposure / value } else { 0.0 };
    }
    Ok(PortfolioTrajectory {
        labels: config.assets.iter().map(|a| a.label.clone()).collect(),
        per_asset,
        total_gain_loss,
        leverage,
    })
}

/// Draws one return path per asset, asset `i` on stream `i` of `seed`.
pub fn sample_portfolio_paths(
    models: &[ReturnModel],
    stage: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if stage == 0 {
        return Err(Error::InvalidArgument(
            "path length must be at least 1".into(),
        ));
    }
    Ok(models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut rng = rng_for(seed, i as u64);
            let mut path = vec![0.0; stage];
            m.sampler().fill(&mut rng, &mut path);
            path
        })
        .collect())
}

/// Asset inputs for [`optimize_portfolio`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssetTarget {
    pub pmf: EmpiricalPmf,
    /// Std ceiling per unit of capital allocated to the asset.
    pub target_std: f64,
}

/// Independent gain selection for each asset on capital `v0 / m`.
///
/// Targets are per unit of allocated capital, so asset `i` is solved with
/// ceiling `target_std * v0 / m` in currency. Every asset uses the same
/// seed; identical assets therefore get identical gains.
pub fn optimize_portfolio(
    assets: &[AssetTarget],
    v0: f64,
    stage: usize,
    tol: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<OptimalGainResult>> {
    if assets.is_empty() {
        return Err(Error::Empty);
    }
    if !(v0.is_finite() && v0 > 0.0) {
        return Err(Error::InvalidAccount(v0));
    }
    let capital = v0 / assets.len() as f64;
    assets
        .iter()
        .enumerate()
        .map(|(i, a)| {
            solve_optimal_gain_empirical(
                &a.pmf,
                capital,
                stage,
                a.target_std * capital,
                tol * capital,
                n_paths,
                seed,
            )
            .map_err(Error::for_asset(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asset(label: &str, k: f64) -> AssetController {
        AssetController {
            label: label.into(),
            bounds: ReturnBounds::new(-0.3, 0.3).unwrap(),
            k_gain: k,
        }
    }

    #[test]
    fn single_asset_reduces_to_simulate() {
        let cfg = PortfolioConfig::new(vec![asset("a", 0.7)], 2.0).unwrap();
        let path = vec![0.1, -0.2, 0.05, 0.3];
        let p = run_portfolio(&cfg, &[path.clone()]).unwrap();
        let single = simulate(
            &ControllerConfig::balanced(0.7, 2.0, cfg.assets()[0].bounds).unwrap(),
            &path,
        )
        .unwrap();
        assert_eq!(p.per_asset[0], single);
        assert_eq!(p.total_gain_loss, single.gain_loss);
    }

    #[test]
    fn zero_gains_give_zero_total() {
        let cfg = PortfolioConfig::new(vec![asset("a", 0.0), asset("b", 0.0)], 100.0).unwrap();
        let p = run_portfolio(&cfg, &[vec![0.1, -0.1, 0.2], vec![-0.2, 0.0, 0.1]]).unwrap();
        assert!(p.total_gain_loss.iter().all(|&g| g == 0.0));
        assert!(p.leverage.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn books_start_at_v0_over_2m() {
        let cfg = PortfolioConfig::new(
            vec![asset("a", 0.5), asset("b", 0.2), asset("c", 0.1)],
            90.0,
        )
        .unwrap();
        let p = run_portfolio(&cfg, &[vec![0.1], vec![0.1], vec![0.1]]).unwrap();
        for t in &p.per_asset {
            assert_eq!(t.v_long[0], 15.0);
            assert_eq!(t.v_short[0], 15.0);
        }
    }

    #[test]
    fn mismatched_paths_rejected() {
        let cfg = PortfolioConfig::new(vec![asset("a", 0.5), asset("b", 0.2)], 1.0).unwrap();
        assert!(matches!(
            run_portfolio(&cfg, &[vec![0.1, 0.2], vec![0.1]]),
            Err(Error::LengthMismatch { index: 1, .. })
        ));
        assert!(matches!(
            run_portfolio(&cfg, &[vec![0.1], vec![0.9]]),
            Err(Error::Asset { index: 1, .. })
        ));
    }

    #[test]
    fn csv_columns() {
        let cfg = PortfolioConfig::new(vec![asset("TSLA", 0.5), asset("MSFT", 0.2)], 1.0).unwrap();
        let p = run_portfolio(&cfg, &[vec![0.1], vec![0.1]]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s.lines().next().unwrap(),
            "k,gain_TSLA,gain_MSFT,total_gain_loss,leverage_ratio"
        );
        assert_eq!(s.lines().count(), 3);
    }

    #[test]
    fn identical_assets_get_identical_gains() {
        let pmf = EmpiricalPmf::new([(-0.05, 0.5), (0.07, 0.5)]).unwrap();
        let a = AssetTarget {
            pmf,
            target_std: 0.05,
        };
        let r = optimize_portfolio(&[a.clone(), a], 10.0, 20, 1e-3, 2000, 3).unwrap();
        assert_eq!(r[0].k_star, r[1].k_star);
    }
}
