//! Account recursions of the double linear feedback controller on a single
//! asset.
//!
//! The long book starts with `alpha * V0` and trades `u_L = K * V_L`; the
//! short book starts with `(1 - alpha) * V0` and trades `u_S = -K * V_S`.
//! Both books are marked to the same return `X(k)` each period.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::returns::ReturnBounds;

/// Relative slack below zero that is treated as rounding when `K * X == 1`.
const ROUNDING_FLOOR: f64 = 1e-12;

/// `(alpha, K)` together with the initial account and the admissible bound
/// derived from the return model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    alpha: f64,
    k_gain: f64,
    v0: f64,
    k_max: f64,
    bounds: ReturnBounds,
}

impl ControllerConfig {
    pub fn new(alpha: f64, k_gain: f64, v0: f64, bounds: ReturnBounds) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::InvalidAccount(v0));
        }
        let k_max = bounds.k_max();
        if !(k_gain >= 0.0 && k_gain <= k_max) {
            return Err(Error::InadmissibleGain { k_gain, k_max });
        }
        Ok(Self {
            alpha,
            k_gain,
            v0,
            k_max,
            bounds,
        })
    }

    /// Balanced controller, `alpha = 1/2`.
    pub fn balanced(k_gain: f64, v0: f64, bounds: ReturnBounds) -> Result<Self> {
        Self::new(0.5, k_gain, v0, bounds)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k_gain(&self) -> f64 {
        self.k_gain
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn bounds(&self) -> ReturnBounds {
        self.bounds
    }

    /// Same controller with a different gain, re-checked for admissibility.
    pub fn with_gain(&self, k_gain: f64) -> Result<Self> {
        Self::new(self.alpha, k_gain, self.v0, self.bounds)
    }
}

/// Long/short book values at one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountState {
    pub v_long: f64,
    pub v_short: f64,
}

impl AccountState {
    pub fn initial(config: &ControllerConfig) -> Self {
        Self {
            v_long: config.alpha * config.v0,
            v_short: (1.0 - config.alpha) * config.v0,
        }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.v_long + self.v_short
    }

    /// `(u_L, u_S)` for gain `k_gain`.
    #[inline]
    pub fn controls(&self, k_gain: f64) -> (f64, f64) {
        (k_gain * self.v_long, -k_gain * self.v_short)
    }

    /// Applies one period with return `x`. No bounds checking.
    #[inline]
    pub fn step(&mut self, k_gain: f64, x: f64) {
        let (u_long, u_short) = self.controls(k_gain);
        self.v_long += x * u_long;
        self.v_short += x * u_short;
    }

    /// Clamps rounding-level negatives to zero; a genuinely negative book
    /// means survivability failed.
    fn settle(&mut self, v0: f64, stage: usize) -> Result<()> {
        for v in [&mut self.v_long, &mut self.v_short] {
            if !v.is_finite() {
                return Err(Error::Overflow { stage });
            }
            if *v < 0.0 {
                if *v >= -ROUNDING_FLOOR * v0 {
                    *v = 0.0;
                } else {
                    return Err(Error::Internal(format!(
                        "book value {v} < 0 at stage {stage} with admissible gain"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-stage controls `(u_L, u_S, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub u_long: f64,
    pub u_short: f64,
    pub u: f64,
}

/// Full record of one simulated path, stages `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountTrajectory {
    pub v0: f64,
    pub v_long: Vec<f64>,
    pub v_short: Vec<f64>,
    pub v_total: Vec<f64>,
    pub gain_loss: Vec<f64>,
    pub controls: Vec<Controls>,
}

impl AccountTrajectory {
    /// Number of recorded stages, including stage 0.
    pub fn len(&self) -> usize {
        self.v_total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_total.is_empty()
    }

    pub fn terminal_gain(&self) -> f64 {
        *self.gain_loss.last().expect("trajectory has stage 0")
    }

    /// Writes `k,v_long,v_short,v_total,gain_loss,u_long,u_short`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k",
            "v_long",
            "v_short",
            "v_total",
            "gain_loss",
            "u_long",
            "u_short",
        ])?;
        for k in 0..self.len() {
            let c = self.controls[k];
            w.write_record([
                k.to_string(),
                self.v_long[k].to_string(),
                self.v_short[k].to_string(),
                self.v_total[k].to_string(),
                self.gain_loss[k].to_string(),
                c.u_long.to_string(),
                c.u_short.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

fn check_path(config: &ControllerConfig, path: &[f64]) -> Result<()> {
    let b = config.bounds;
    match path.iter().position(|&x| !b.contains(x)) {
        Some(stage) => Err(Error::ReturnOutOfBounds {
            stage,
            value: path[stage],
            x_min: b.x_min(),
            x_max: b.x_max(),
        }),
        None => Ok(()),
    }
}

/// Runs the recursion along `path`, recording every stage.
pub fn simulate(config: &ControllerConfig, path: &[f64]) -> Result<AccountTrajectory> {
    check_path(config, path)?;
    let n = path.len() + 1;
    let mut traj = AccountTrajectory {
        v0: config.v0,
        v_long: Vec::with_capacity(n),
        v_short: Vec::with_capacity(n),
        v_total: Vec::with_capacity(n),
        gain_loss: Vec::with_capacity(n),
        controls: Vec::with_capacity(n),
    };
    let k_gain = config.k_gain;
    let mut state = AccountState::initial(config);
    let record = |s: &AccountState, traj: &mut AccountTrajectory| {
        let (u_long, u_short) = s.controls(k_gain);
        let total = s.total();
        traj.v_long.push(s.v_long);
        traj.v_short.push(s.v_short);
        traj.v_total.push(total);
        traj.gain_loss.push(total - config.v0);
        traj.controls.push(Controls {
            u_long,
            u_short,
            u: u_long + u_short,
        });
    };
    record(&state, &mut traj);
    for (k, &x) in path.iter().enumerate() {
        state.step(k_gain, x);
        state.settle(config.v0, k + 1)?;
        record(&state, &mut traj);
    }
    Ok(traj)
}

/// Terminal gain-loss `V(n) - V0` without recording the trajectory.
///
/// The path is trusted to lie inside the controller's bounds; used by the
/// Monte-Carlo engine where every draw comes from the model's support.
#[inline]
pub fn terminal_gain_unchecked(config: &ControllerConfig, path: &[f64]) -> f64 {
    let mut state = AccountState::initial(config);
    for &x in path {
        state.step(config.k_gain, x);
    }
    state.total() - config.v0
}

/// Outcome of the cash-financing audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CashFinancingReport {
    /// `max_k |u(k)| / V(k)`, zero where `V(k) = 0`.
    pub max_ratio: f64,
    pub k_gain: f64,
    /// `max_ratio <= k_gain <= 1`.
    pub holds: bool,
}

pub fn audit_cash_financing(traj: &AccountTrajectory, k_gain: f64) -> CashFinancingReport {
    let max_ratio = traj
        .controls
        .iter()
        .zip(&traj.v_total)
        .map(|(c, &v)| if v > 0.0 { c.u.abs() / v } else { 0.0 })
        .fold(0.0_f64, f64::max);
    let holds = max_ratio <= k_gain * (1.0 + ROUNDING_FLOOR) && k_gain <= 1.0;
    CashFinancingReport {
        max_ratio,
        k_gain,
        holds,
    }
}

/// Survivability floor `V0 * (alpha (1 + K x_min)^k + (1 - alpha)(1 - K x_max)^k)`.
pub fn survivability_floor(config: &ControllerConfig, stage: usize) -> f64 {
    let b = config.bounds;
    let k = stage as i32;
    let up = (1.0 + config.k_gain * b.x_min()).max(0.0);
    let down = (1.0 - config.k_gain * b.x_max()).max(0.0);
    config.v0 * (config.alpha * up.powi(k) + (1.0 - config.alpha) * down.powi(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> ReturnBounds {
        ReturnBounds::new(-0.5, 0.5).unwrap()
    }

    #[test]
    fn no_trade_keeps_account_flat() {
        let cfg = ControllerConfig::new(0.3, 0.0, 2.0, bounds()).unwrap();
        let t = simulate(&cfg, &[0.1, -0.2, 0.3, 0.05, -0.4]).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.v_total.iter().all(|&v| v == 2.0));
        assert!(t.gain_loss.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn balanced_single_step_hand_values() {
        let cfg = ControllerConfig::balanced(1.0, 1.0, bounds()).unwrap();
        let t = simulate(&cfg, &[0.1]).unwrap();
        assert!((t.v_total[1] - 1.0).abs() < 1e-15);
        assert!(t.gain_loss[1].abs() < 1e-15);
        let t = simulate(&cfg, &[0.1, 0.1]).unwrap();
        assert!((t.v_total[2] - 1.01).abs() < 1e-14);
        assert!((t.gain_loss[2] - 0.01).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            ControllerConfig::new(0.5, 1.1, 1.0, bounds()),
            Err(Error::InadmissibleGain { .. })
        ));
        let wide = ReturnBounds::new(-0.5, 2.0).unwrap();
        assert!(matches!(
            ControllerConfig::new(0.5, 0.6, 1.0, wide),
            Err(Error::InadmissibleGain { .. })
        ));
        assert!(ControllerConfig::new(1.5, 0.1, 1.0, bounds()).is_err());
        assert!(ControllerConfig::new(0.5, 0.1, 0.0, bounds()).is_err());
    }

    #[test]
    fn rejects_out_of_bounds_return() {
        let cfg = ControllerConfig::balanced(0.5, 1.0, bounds()).unwrap();
        assert!(matches!(
            simulate(&cfg, &[0.1, 0.6]),
            Err(Error::ReturnOutOfBounds { stage: 1, .. })
        ));
    }

    #[test]
    fn short_book_hits_zero_without_error() {
        // K * x_max == 1 wipes out the short book exactly.
        let b = ReturnBounds::new(-0.3, 2.0).unwrap();
        let cfg = ControllerConfig::balanced(b.k_max(), 1.0, b).unwrap();
        let t = simulate(&cfg, &[2.0, -0.3, 2.0]).unwrap();
        assert!(t.v_short.iter().all(|&v| v >= 0.0));
        assert_eq!(t.v_short[1], 0.0);
    }

    #[test]
    fn audit_reports() {
        let cfg = ControllerConfig::new(0.5, 0.0, 1.0, bounds()).unwrap();
        let t = simulate(&cfg, &[0.1, -0.1]).unwrap();
        assert_eq!(audit_cash_financing(&t, 0.0).max_ratio, 0.0);

        let cfg = ControllerConfig::balanced(0.75, 1.0, bounds()).unwrap();
        let t = simulate(&cfg, &[0.3, -0.2, 0.5, -0.5, 0.1]).unwrap();
        let rep = audit_cash_financing(&t, 0.75);
        assert!(rep.holds && rep.max_ratio <= 0.75);

        let cfg = ControllerConfig::new(1.0, 1.0, 1.0, bounds()).unwrap();
        let t = simulate(&cfg, &[0.3, -0.2, 0.5, -0.5, 0.1]).unwrap();
        for (c, v) in t.controls.iter().zip(&t.v_total) {
            assert!((c.u.abs() / v - 1.0).abs() < 1e-15);
        }
        assert!(audit_cash_financing(&t, 1.0).holds);
    }

    #[test]
    fn csv_layout() {
        let cfg = ControllerConfig::balanced(1.0, 1.0, bounds()).unwrap();
        let t = simulate(&cfg, &[0.1]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,v_long,v_short,v_total,gain_loss,u_long,u_short"
        );
        assert_eq!(lines.next().unwrap(), "0,0.5,0.5,1,0,0.5,-0.5");
        assert_eq!(lines.count(), 1);
    }
}
