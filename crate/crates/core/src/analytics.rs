//! Closed-form moments of the cumulative gain-loss `G(alpha, K, k) = V(k) - V0`
//! for independent returns with mean `mu` and variance `sigma2`, plus the
//! robust-positive-expectation checks built on them.
//!
//! With `a = 1 + K mu` and `b = 1 - K mu`:
//!
//! ```text
//! E[G]   = V0 (alpha a^k + (1 - alpha) b^k - 1)
//! var(G) = V0^2 ( alpha^2 (A^k - a^2k) + (1 - alpha)^2 (B^k - b^2k)
//!                 + 2 alpha (1 - alpha) (C^k - (ab)^k) )
//! ```
//!
//! where `A = a^2 + K^2 sigma2`, `B = b^2 + K^2 sigma2` and
//! `C = 1 - K^2 (sigma2 + mu^2)`. The variance is the usual six-term
//! expansion regrouped by pairs; each pair differs by exactly `K^2 sigma2`
//! so `x^k - y^k` is evaluated as `(x - y) * sum x^i y^(k-1-i)` without
//! cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used when clamping rounding-level negative variances.
pub const VARIANCE_CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainLossStats {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub stage: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn check_common(k_gain: f64, mu: f64, v0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&k_gain) {
        return Err(Error::InadmissibleGain { k_gain, k_max: 1.0 });
    }
    if !(mu.is_finite() && mu > -1.0) {
        return Err(Error::InvalidDrift(mu));
    }
    if !(v0.is_finite() && v0 > 0.0) {
        return Err(Error::InvalidAccount(v0));
    }
    let theta = k_gain * mu;
    if theta > 1.0 {
        return Err(Error::ScaledDriftOutOfRange(theta));
    }
    Ok(theta)
}

fn stage_exp(stage: usize) -> Result<i32> {
    i32::try_from(stage).map_err(|_| Error::InvalidArgument(format!("stage {stage} too large")))
}

/// `E[G]/V0` as a function of the scaled drift `theta = K mu`.
///
/// Evaluated as `alpha expm1(k ln1p(theta)) + (1 - alpha) expm1(k ln1p(-theta))`
/// so the second-order term survives for small `theta` at `alpha = 1/2`.
pub fn expected_gain_scaled(alpha: f64, theta: f64, stage: usize) -> f64 {
    if stage == 0 {
        return 0.0;
    }
    let k = stage as f64;
    let up = (k * theta.ln_1p()).exp_m1();
    let down = (k * (-theta).ln_1p()).exp_m1();
    alpha * up + (1.0 - alpha) * down
}

/// Expected cumulative gain-loss `E[G(alpha, K, k)]`.
pub fn expected_gain(alpha: f64, k_gain: f64, stage: usize, mu: f64, v0: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let theta = check_common(k_gain, mu, v0)?;
    stage_exp(stage)?;
    Ok(v0 * expected_gain_scaled(alpha, theta, stage))
}

/// `sum_{i<k} x^i y^(k-1-i)`, so that `x^k - y^k = (x - y) * power_gap_sum(x, y, k)`.
fn power_gap_sum(x: f64, y: f64, k: usize) -> f64 {
    let mut t = 0.0;
    let mut y_pow = 1.0;
    for _ in 0..k {
        t = t * x + y_pow;
        y_pow *= y;
    }
    t
}

/// Variance of `G(alpha, K, k)`.
pub fn variance_gain(
    alpha: f64,
    k_gain: f64,
    stage: usize,
    mu: f64,
    sigma2: f64,
    v0: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let theta = check_common(k_gain, mu, v0)?;
    stage_exp(stage)?;
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::InvalidVariance(sigma2));
    }
    let spread = k_gain * k_gain * sigma2;
    let a = 1.0 + theta;
    let b = 1.0 - theta;
    let cross = 1.0 - k_gain * k_gain * (sigma2 + mu * mu);
    if cross < -VARIANCE_CLAMP_TOL {
        return Err(Error::InvalidArgument(format!(
            "1 - K^2 E[X^2] = {cross} < 0: second moment inconsistent with an admissible gain"
        )));
    }
    let cross = cross.max(0.0);
    if spread == 0.0 || stage == 0 {
        return Ok(0.0);
    }

    let beta = 1.0 - alpha;
    let long = alpha * alpha * power_gap_sum(a * a + spread, a * a, stage);
    let short = beta * beta * power_gap_sum(b * b + spread, b * b, stage);
    let cov = 2.0 * alpha * beta * power_gap_sum(a * b, cross, stage);
    let scale = v0 * v0 * spread;
    let var = scale * (long + short - cov);
    let magnitude = scale * (long + short + cov);
    if var >= 0.0 {
        Ok(var)
    } else if var >= -VARIANCE_CLAMP_TOL * magnitude.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Internal(format!(
            "closed-form variance evaluated to {var} (alpha={alpha}, K={k_gain}, k={stage}, mu={mu}, sigma2={sigma2})"
        )))
    }
}

/// Standard deviation of `G(alpha, K, k)`.
pub fn std_gain(
    alpha: f64,
    k_gain: f64,
    stage: usize,
    mu: f64,
    sigma2: f64,
    v0: f64,
) -> Result<f64> {
    variance_gain(alpha, k_gain, stage, mu, sigma2, v0).map(|v| v.max(0.0).sqrt())
}

pub fn gain_loss_stats(
    alpha: f64,
    k_gain: f64,
    stage: usize,
    mu: f64,
    sigma2: f64,
    v0: f64,
) -> Result<GainLossStats> {
    let mean = expected_gain(alpha, k_gain, stage, mu, v0)?;
    let variance = variance_gain(alpha, k_gain, stage, mu, sigma2, v0)?;
    Ok(GainLossStats {
        mean,
        variance,
        std: variance.sqrt(),
        stage,
    })
}

/// Balanced-controller expectation and whether it is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpeCheck {
    pub expected_gain: f64,
    pub positive: bool,
}

pub fn check_rpe(k_gain: f64, stage: usize, mu: f64, v0: f64) -> Result<RpeCheck> {
    if stage <= 1 {
        return Err(Error::StageTooSmall { stage, min: 2 });
    }
    let g = expected_gain(0.5, k_gain, stage, mu, v0)?;
    Ok(RpeCheck {
        expected_gain: g,
        positive: g > 0.0,
    })
}

/// A drift for which an unbalanced controller loses money in expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpeCounterexample {
    pub alpha: f64,
    /// Scaled drift `K * mu`.
    pub theta: f64,
    /// The drift itself, `theta / K`.
    pub mu: f64,
    pub stage: usize,
    /// `E[G]` with `V0 = 1`; always negative.
    pub gain_value: f64,
}

/// Searches for a nonzero drift making `E[G(alpha, K, k)] < 0`.
///
/// The slope of `E[G]` in `theta` at zero is `k (2 alpha - 1)` and the
/// function is strictly convex, so a witness lies on the positive side for
/// `alpha < 1/2` and on the negative side for `alpha > 1/2`. The search
/// halves `|theta|` from 1 and keeps the implied drift above -1. Returns
/// `None` for `alpha = 1/2`.
pub fn find_rpe_counterexample(
    alpha: f64,
    k_gain: f64,
    stage: usize,
) -> Result<Option<RpeCounterexample>> {
    check_alpha(alpha)?;
    if stage <= 1 {
        return Err(Error::StageTooSmall { stage, min: 2 });
    }
    if !(k_gain > 0.0 && k_gain <= 1.0) {
        return Err(Error::InadmissibleGain { k_gain, k_max: 1.0 });
    }
    stage_exp(stage)?;
    if alpha == 0.5 {
        return Ok(None);
    }
    let sign = if alpha < 0.5 { 1.0 } else { -1.0 };
    let mut magnitude = 1.0_f64;
    while magnitude >= f64::MIN_POSITIVE {
        let theta = sign * magnitude;
        let mu = theta / k_gain;
        if theta > -1.0 && mu > -1.0 {
            let g = expected_gain_scaled(alpha, theta, stage);
            if g < 0.0 {
                return Ok(Some(RpeCounterexample {
                    alpha,
                    theta,
                    mu,
                    stage,
                    gain_value: g,
                }));
            }
        }
        magnitude *= 0.5;
    }
    Ok(None)
}

/// `E[G(1/2, K, k+1)] >= E[G(1/2, K, k)]` up to 1e-12.
pub fn check_robust_growth(k_gain: f64, stage: usize, mu: f64, v0: f64) -> Result<bool> {
    if stage < 1 {
        return Err(Error::StageTooSmall { stage, min: 1 });
    }
    let now = expected_gain(0.5, k_gain, stage, mu, v0)?;
    let next = expected_gain(0.5, k_gain, stage + 1, mu, v0)?;
    Ok(next >= now - 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal six-term expansion, kept to cross-check the regrouped form.
    fn variance_six_term(alpha: f64, k: f64, stage: usize, mu: f64, s2: f64, v0: f64) -> f64 {
        let n = stage as i32;
        let a = 1.0 + k * mu;
        let b = 1.0 - k * mu;
        let v2 = v0 * v0;
        let mean = alpha * a.powi(n) + (1.0 - alpha) * b.powi(n) - 1.0;
        alpha * alpha * v2 * (a * a + k * k * s2).powi(n)
            + (1.0 - alpha).powi(2) * v2 * (b * b + k * k * s2).powi(n)
            + 2.0 * alpha * (1.0 - alpha) * v2 * (1.0 - k * k * (s2 + mu * mu)).powi(n)
            - 2.0 * alpha * v2 * a.powi(n)
            - 2.0 * (1.0 - alpha) * v2 * b.powi(n)
            + v2
            - v2 * mean * mean
    }

    #[test]
    fn zero_drift_balanced_mean_is_zero() {
        for k in [2, 7, 50] {
            assert_eq!(expected_gain(0.5, 0.8, k, 0.0, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn uneven_alpha_value() {
        // K mu = 1/4 with K = 1/2, mu = 1/2
        let g = expected_gain(0.25, 0.5, 2, 0.5, 1.0).unwrap();
        assert!((g + 0.1875).abs() < 1e-12);
        assert!((expected_gain_scaled(0.25, 0.25, 2) + 0.1875).abs() < 1e-15);
    }

    #[test]
    fn balanced_three_stage_value() {
        // 0.5 * (1.05^3 + 0.95^3) - 1
        let g = expected_gain(0.5, 0.5, 3, 0.1, 1.0).unwrap();
        assert!((g - 0.0075).abs() < 1e-14, "{g}");
    }

    #[test]
    fn variance_degenerate_cases() {
        assert_eq!(variance_gain(0.3, 0.7, 9, 0.2, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(variance_gain(0.3, 0.0, 9, 0.2, 0.04, 2.0).unwrap(), 0.0);
        assert_eq!(std_gain(0.3, 0.0, 9, 0.2, 0.04, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn variance_zero_drift_reduction() {
        // (alpha^2 + (1-alpha)^2)(1 + K^2 s2)^k + 2 alpha(1-alpha)(1 - K^2 s2)^k - 1
        let v = variance_gain(0.5, 0.5, 2, 0.0, 0.04, 1.0).unwrap();
        assert!((v - 1e-4).abs() < 1e-15, "{v}");
        let s = std_gain(0.5, 0.5, 2, 0.0, 0.04, 1.0).unwrap();
        assert!((s - 0.01).abs() < 1e-13);
    }

    #[test]
    fn variance_matches_six_term_expansion() {
        let cases = [
            (0.5, 1.0, 90, -0.1, 0.0225, 1.0),
            (0.25, 0.5, 3, 0.125, 0.016875, 1.0),
            (0.9, 0.3, 20, 0.05, 0.01, 3.0),
            (0.0, 0.8, 7, -0.2, 0.05, 1.0),
        ];
        for (al, k, n, mu, s2, v0) in cases {
            let a = variance_gain(al, k, n, mu, s2, v0).unwrap();
            let b = variance_six_term(al, k, n, mu, s2, v0);
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn std_monotone_pair() {
        let lo = std_gain(0.5, 0.2, 10, 0.05, 0.02, 1.0).unwrap();
        let hi = std_gain(0.5, 0.4, 10, 0.05, 0.02, 1.0).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn rpe_checks() {
        let r = check_rpe(0.5, 2, 0.5, 1.0).unwrap();
        assert!((r.expected_gain - 0.0625).abs() < 1e-15 && r.positive);
        let r = check_rpe(0.3, 5, -0.2, 1.0).unwrap();
        assert!(r.positive && r.expected_gain > 0.0);
        let r = check_rpe(0.0, 10, 0.1, 1.0).unwrap();
        assert_eq!(r.expected_gain, 0.0);
        assert!(!r.positive);
        assert!(matches!(
            check_rpe(0.5, 1, 0.1, 1.0),
            Err(Error::StageTooSmall { .. })
        ));
    }

    #[test]
    fn counterexample_search() {
        assert!(find_rpe_counterexample(0.5, 0.7, 4).unwrap().is_none());

        let c = find_rpe_counterexample(0.25, 0.5, 2).unwrap().unwrap();
        assert!(c.theta > 0.0 && c.gain_value < 0.0);
        assert!((expected_gain_scaled(0.25, c.theta, 2) - c.gain_value).abs() < 1e-15);

        let c = find_rpe_counterexample(0.0, 0.5, 2).unwrap().unwrap();
        assert!((c.gain_value - ((1.0 - c.theta).powi(2) - 1.0)).abs() < 1e-15);

        let c = find_rpe_counterexample(0.8, 0.2, 3).unwrap().unwrap();
        assert!(c.theta < 0.0 && c.mu > -1.0 && c.gain_value < 0.0);

        assert!(find_rpe_counterexample(0.3, 0.0, 3).is_err());
    }

    #[test]
    fn growth_checks() {
        assert!(check_robust_growth(0.0, 1, 0.3, 1.0).unwrap());
        assert_eq!(expected_gain(0.5, 0.5, 1, 0.2, 1.0).unwrap(), 0.0);
        let g2 = expected_gain(0.5, 0.5, 2, 0.2, 1.0).unwrap();
        assert!((g2 - 0.01).abs() < 1e-15);
        assert!(check_robust_growth(0.5, 1, 0.2, 1.0).unwrap());
    }

    #[test]
    fn domain_errors() {
        assert!(expected_gain(1.2, 0.5, 2, 0.1, 1.0).is_err());
        assert!(expected_gain(0.5, 1.5, 2, 0.1, 1.0).is_err());
        assert!(expected_gain(0.5, 0.5, 2, -1.0, 1.0).is_err());
        assert!(expected_gain(0.5, 0.5, 2, 3.0, 1.0).is_err());
        assert!(variance_gain(0.5, 0.5, 2, 0.1, -0.1, 1.0).is_err());
    }
}
