//! Double linear feedback trading on a single asset or a basket.
//!
//! The account is split into a long book (`alpha * V0`) and a short book
//! (`(1 - alpha) * V0`), each traded with linear feedback of gain `K`. With
//! `alpha = 1/2` the expected cumulative gain-loss is positive for every
//! nonzero drift, which leaves `K` free to trade expected gain against
//! risk. This crate provides:
//!
//! - [`returns`]: return models, empirical PMFs from prices, seeded sampling
//! - [`dynamics`]: the account recursions, cash-financing audit
//! - [`analytics`]: closed-form mean/variance of the gain-loss and the
//!   positivity checks built on them
//! - [`optimizer`]: the mean/std curve and optimal gain under a std ceiling
//! - [`montecarlo`]: simulation estimates and an exhaustive oracle
//! - [`portfolio`]: equal-capital multi-asset extension
//! - [`backtest`]: fit-on-train, replay-on-test workflows

pub mod analytics;
pub mod backtest;
pub mod dynamics;
pub mod error;
pub mod montecarlo;
pub mod optimizer;
pub mod portfolio;
pub mod returns;

pub use analytics::{
    check_robust_growth, check_rpe, expected_gain, find_rpe_counterexample, gain_loss_stats,
    std_gain, variance_gain, GainLossStats, RpeCheck, RpeCounterexample,
};
pub use backtest::{backtest_portfolio, backtest_single, AssetSegments, FitSettings};
pub use dynamics::{
    audit_cash_financing, simulate, AccountTrajectory, CashFinancingReport, ControllerConfig,
};
pub use error::{Error, Result};
pub use montecarlo::{estimate_exact_small, estimate_gain_stats, ExactStats, McEstimate};
pub use optimizer::{
    build_curve, build_curve_empirical, solve_optimal_gain, solve_optimal_gain_empirical,
    MeanStdCurve, OptimalGainResult,
};
pub use portfolio::{
    optimize_portfolio, run_portfolio, AssetController, AssetTarget, PortfolioConfig,
    PortfolioTrajectory,
};
pub use returns::{
    load_prices_csv, pmf_from_returns, returns_from_prices, sample_path, EmpiricalPmf, PriceSeries,
    ReturnBounds, ReturnModel,
};
