use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dlf_core::analytics::{expected_gain, gain_loss_stats, GainLossStats};
use dlf_core::backtest::{
    backtest_portfolio, backtest_single, AssetSegments, BacktestReport, FitSettings,
    PortfolioBacktestReport,
};
use dlf_core::montecarlo::{
    estimate_gain_stats, McEstimate, DEFAULT_PATHS, DEFAULT_PORTFOLIO_PATHS,
};
use dlf_core::optimizer::{
    build_curve, build_curve_empirical, solve_optimal_gain, solve_optimal_gain_empirical,
    MeanStdCurve, OptimalGainResult, DEFAULT_MC_TOL, DEFAULT_TOL,
};
use dlf_core::returns::{load_prices_csv, pmf_from_returns, EmpiricalPmf, ModelKind, ReturnModel};

use crate::config::PortfolioFile;
use crate::manifest::{to_json, OutputSet, RunManifest};
use crate::CliError;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "dlf",
    version,
    about = "Double linear feedback long-short trading toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean/std curve of the balanced controller over the admissible gains.
    Curve(CurveArgs),
    /// Largest expected gain under a std ceiling.
    Optimize(OptimizeArgs),
    /// Monte-Carlo estimate of the gain-loss moments for a fixed controller.
    Simulate(SimulateArgs),
    /// Fit on a training price segment, replay on a test segment.
    Backtest(BacktestArgs),
    /// Named parameter sets from the worked examples.
    Repro(ReproArgs),
}

/// Return model: either moments (`--mu`, `--sigma`) or a price file.
#[derive(Debug, Clone, Args, Serialize)]
struct ModelArgs {
    /// Mean per-period return.
    #[arg(
        long,
        allow_negative_numbers = true,
        requires = "sigma",
        conflicts_with = "prices"
    )]
    mu: Option<f64>,
    /// Standard deviation of the per-period return.
    #[arg(long, allow_negative_numbers = true, requires = "mu")]
    sigma: Option<f64>,
    /// Upper return bound in moment mode; the largest gain is min(1, 1/x_max).
    #[arg(long, default_value_t = 1.0)]
    x_max: f64,
    /// Price CSV; returns are turned into an empirical PMF.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Price column in the CSV.
    #[arg(long, default_value = "adj_close")]
    price_column: String,
}

#[derive(Debug, Clone, Args, Serialize)]
struct McArgs {
    /// Monte-Carlo path count.
    #[arg(long)]
    n_paths: Option<usize>,
    /// RNG seed.
    #[arg(long, env = "DLF_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    /// Stage k; defaults to the number of returns in price mode.
    #[arg(long)]
    stage: Option<usize>,
    /// Number of gains on the grid, endpoints included.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[command(flatten)]
    mc: McArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    #[arg(long)]
    stage: Option<usize>,
    /// Std ceiling s.
    #[arg(long, allow_negative_numbers = true)]
    target_std: f64,
    /// Tolerance on the achieved std (1e-9 closed form, 1e-3 Monte-Carlo).
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    mc: McArgs,
    /// Also write the JSON result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    k_gain: f64,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    #[arg(long)]
    stage: usize,
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct BacktestArgs {
    /// Training price CSV (single asset).
    #[arg(long, requires_all = ["test_prices", "target_std"], conflicts_with = "portfolio")]
    train_prices: Option<PathBuf>,
    /// Test price CSV (single asset).
    #[arg(long, requires = "train_prices")]
    test_prices: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    target_std: Option<f64>,
    /// Portfolio TOML file (multi-asset).
    #[arg(long)]
    portfolio: Option<PathBuf>,
    #[arg(long, default_value = "adj_close")]
    price_column: String,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    stage: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, default_value = "backtest_out")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    /// mu = -0.1, sigma = 0.15, s = 0.3 at k = 10, 30, 60, 90.
    Toy,
    /// alpha = 1/4, K = mu = 1/2 for k = 1..10.
    UnevenAlpha,
    /// Single asset, s = 0.08, V0 = 1 (needs --train-prices/--test-prices).
    Tsla,
    /// Three assets, s = (0.08, 0.01, 0.02), V0 = 100 (needs --portfolio).
    ThreeStock,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ReproArgs {
    #[arg(value_enum)]
    preset: Preset,
    #[arg(long, default_value = "repro_out")]
    out_dir: PathBuf,
    #[arg(long)]
    train_prices: Option<PathBuf>,
    #[arg(long)]
    test_prices: Option<PathBuf>,
    #[arg(long)]
    portfolio: Option<PathBuf>,
    #[arg(long, default_value = "adj_close")]
    price_column: String,
    #[command(flatten)]
    mc: McArgs,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Curve(a) => cmd_curve(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Backtest(a) => cmd_backtest(&a),
        Command::Repro(a) => cmd_repro(&a),
    }
}

enum Model {
    Moments { mu: f64, sigma: f64, k_max: f64 },
    Empirical { pmf: EmpiricalPmf, n_returns: usize },
}

fn resolve_model(args: &ModelArgs) -> Result<Model, CliError> {
    if let Some(path) = &args.prices {
        let series = load_prices_csv(path, &args.price_column)?;
        let returns = series.returns();
        let pmf = pmf_from_returns(&returns)?;
        return Ok(Model::Empirical {
            pmf,
            n_returns: returns.len(),
        });
    }
    match (args.mu, args.sigma) {
        (Some(mu), Some(sigma)) => {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(CliError::Usage(format!(
                    "--sigma must be >= 0, got {sigma}"
                )));
            }
            if !(args.x_max.is_finite() && args.x_max > 0.0) {
                return Err(CliError::Usage(format!(
                    "--x-max must be > 0, got {}",
                    args.x_max
                )));
            }
            let k_max = if args.x_max > 1.0 {
                1.0 / args.x_max
            } else {
                1.0
            };
            Ok(Model::Moments { mu, sigma, k_max })
        }
        _ => Err(CliError::Usage(
            "give either --prices or both --mu and --sigma".into(),
        )),
    }
}

fn stage_or(stage: Option<usize>, model: &Model) -> Result<usize, CliError> {
    match (stage, model) {
        (Some(s), _) => Ok(s),
        (None, Model::Empirical { n_returns, .. }) => Ok(*n_returns),
        (None, Model::Moments { .. }) => Err(CliError::Usage(
            "--stage is required with --mu/--sigma".into(),
        )),
    }
}

fn emit(out: Option<&Path>, text: &str, manifest: RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut set = OutputSet::for_file(manifest, path);
            set.write(path, text.as_bytes())?;
            set.finish()
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn curve_csv(curve: &MeanStdCurve) -> Result<String, CliError> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_curve(a: &CurveArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model)?;
    let stage = stage_or(a.stage, &model)?;
    let (curve, seed) = match &model {
        Model::Moments { mu, sigma, k_max } => (
            build_curve(*mu, sigma * sigma, a.v0, stage, *k_max, a.grid)?,
            None,
        ),
        Model::Empirical { pmf, .. } => {
            let m = ReturnModel::from_pmf(pmf.clone());
            let n = a.mc.n_paths.unwrap_or(DEFAULT_PATHS);
            (
                build_curve_empirical(&m, a.v0, stage, a.grid, n, a.mc.seed)?,
                Some(a.mc.seed),
            )
        }
    };
    let text = curve_csv(&curve)?;
    emit(a.out.as_deref(), &text, RunManifest::new("curve", a, seed))
}

#[derive(Serialize)]
struct OptimizeOutput {
    mode: &'static str,
    mu: f64,
    sigma2: f64,
    k_max: f64,
    v0: f64,
    n_paths: Option<usize>,
    seed: Option<u64>,
    result: OptimalGainResult,
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model)?;
    let stage = stage_or(a.stage, &model)?;
    let out = match &model {
        Model::Moments { mu, sigma, k_max } => {
            let sigma2 = sigma * sigma;
            let result = solve_optimal_gain(
                *mu,
                sigma2,
                a.v0,
                stage,
                *k_max,
                a.target_std,
                a.tol.unwrap_or(DEFAULT_TOL),
            )?;
            OptimizeOutput {
                mode: "closed_form",
                mu: *mu,
                sigma2,
                k_max: *k_max,
                v0: a.v0,
                n_paths: None,
                seed: None,
                result,
            }
        }
        Model::Empirical { pmf, .. } => {
            let n = a.mc.n_paths.unwrap_or(DEFAULT_PATHS);
            let result = solve_optimal_gain_empirical(
                pmf,
                a.v0,
                stage,
                a.target_std,
                a.tol.unwrap_or(DEFAULT_MC_TOL),
                n,
                a.mc.seed,
            )?;
            OptimizeOutput {
                mode: "monte_carlo",
                mu: pmf.mean(),
                sigma2: pmf.variance(),
                k_max: pmf.bounds().k_max(),
                v0: a.v0,
                n_paths: Some(n),
                seed: Some(a.mc.seed),
                result,
            }
        }
    };
    let text = to_json(&out)?;
    if let Some(path) = &a.out {
        emit(Some(path), &text, RunManifest::new("optimize", a, out.seed))?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct ModelSummary {
    kind: ModelKind,
    atoms: usize,
    x_min: f64,
    x_max: f64,
    mu: f64,
    sigma2: f64,
}

#[derive(Serialize)]
struct SimulateOutput {
    model: ModelSummary,
    alpha: f64,
    estimate: McEstimate,
    closed_form: GainLossStats,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let model = match resolve_model(&a.model)? {
        Model::Moments { mu, sigma, .. } => ReturnModel::two_point_from_moments(mu, sigma)?,
        Model::Empirical { pmf, .. } => ReturnModel::from_pmf(pmf),
    };
    let n = a.mc.n_paths.unwrap_or(DEFAULT_PATHS);
    let estimate = estimate_gain_stats(&model, a.alpha, a.k_gain, a.v0, a.stage, n, a.mc.seed)?;
    let closed_form =
        gain_loss_stats(a.alpha, a.k_gain, a.stage, model.mu(), model.sigma2(), a.v0)?;
    let out = SimulateOutput {
        model: ModelSummary {
            kind: model.kind(),
            atoms: model.pmf().len(),
            x_min: model.bounds().x_min(),
            x_max: model.bounds().x_max(),
            mu: model.mu(),
            sigma2: model.sigma2(),
        },
        alpha: a.alpha,
        estimate,
        closed_form,
    };
    let text = to_json(&out)?;
    if let Some(path) = &a.out {
        emit(
            Some(path),
            &text,
            RunManifest::new("simulate", a, Some(a.mc.seed)),
        )?;
    }
    print!("{text}");
    Ok(())
}

fn trajectory_csv(
    write: impl FnOnce(&mut Vec<u8>) -> dlf_core::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn write_single_backtest(
    report: &BacktestReport,
    dir: &Path,
    set: &mut OutputSet,
) -> Result<(), CliError> {
    let csv = trajectory_csv(|b| report.trajectory.write_csv(b))?;
    set.write(&dir.join("trajectory.csv"), &csv)?;
    set.write(&dir.join("summary.json"), to_json(report)?.as_bytes())?;
    Ok(())
}

fn write_portfolio_backtest(
    report: &PortfolioBacktestReport,
    dir: &Path,
    set: &mut OutputSet,
) -> Result<(), CliError> {
    let csv = trajectory_csv(|b| report.trajectory.write_csv(b))?;
    set.write(&dir.join("portfolio_trajectory.csv"), &csv)?;
    for (label, t) in report
        .trajectory
        .labels
        .iter()
        .zip(&report.trajectory.per_asset)
    {
        let csv = trajectory_csv(|b| t.write_csv(b))?;
        set.write(&dir.join(format!("trajectory_{label}.csv")), &csv)?;
    }
    set.write(&dir.join("summary.json"), to_json(report)?.as_bytes())?;
    Ok(())
}

fn run_single_backtest(
    train: &Path,
    test: &Path,
    column: &str,
    target_std: f64,
    v0: f64,
    settings: &FitSettings,
) -> Result<BacktestReport, CliError> {
    let train = load_prices_csv(train, column)?;
    let test = load_prices_csv(test, column)?;
    Ok(backtest_single(&train, &test, v0, target_std, settings)?)
}

/// Loads a portfolio file; `default_targets` fills in missing per-asset targets.
#[allow(clippy::too_many_arguments)]
fn run_portfolio_backtest(
    path: &Path,
    cli_column: &str,
    v0: Option<f64>,
    default_v0: f64,
    stage: Option<usize>,
    tol: Option<f64>,
    mc: &McArgs,
    default_paths: usize,
    default_targets: Option<&[f64]>,
) -> Result<(PortfolioBacktestReport, FitSettings), CliError> {
    let cfg = PortfolioFile::load(path)?;
    let column = cfg
        .price_column
        .clone()
        .unwrap_or_else(|| cli_column.to_string());
    let mut assets = Vec::with_capacity(cfg.assets.len());
    for (i, a) in cfg.assets.iter().enumerate() {
        let col = a.price_column.as_deref().unwrap_or(&column);
        let target_std = a
            .target_std
            .or_else(|| default_targets.and_then(|t| t.get(i).copied()))
            .ok_or_else(|| CliError::Usage(format!("asset {i}: target_std missing")))?;
        let mut train = load_prices_csv(&a.train_prices, col)?;
        let mut test = load_prices_csv(&a.test_prices, col)?;
        if let Some(t) = &a.ticker {
            train = dlf_core::PriceSeries::new(
                t.clone(),
                train.prices().to_vec(),
                train.dates().map(<[String]>::to_vec),
            )?;
            test = dlf_core::PriceSeries::new(
                t.clone(),
                test.prices().to_vec(),
                test.dates().map(<[String]>::to_vec),
            )?;
        }
        assets.push(AssetSegments {
            train,
            test,
            target_std,
        });
    }
    let settings = FitSettings {
        stage: stage.or(cfg.stage),
        tol: tol.or(cfg.tol).unwrap_or(DEFAULT_MC_TOL),
        n_paths: mc.n_paths.or(cfg.n_paths).unwrap_or(default_paths),
        seed: cfg.seed.unwrap_or(mc.seed),
    };
    let v0 = v0.or(cfg.v0).unwrap_or(default_v0);
    Ok((backtest_portfolio(&assets, v0, &settings)?, settings))
}

fn cmd_backtest(a: &BacktestArgs) -> Result<(), CliError> {
    if let Some(path) = &a.portfolio {
        let (report, settings) = run_portfolio_backtest(
            path,
            &a.price_column,
            a.v0,
            1.0,
            a.stage,
            a.tol,
            &a.mc,
            DEFAULT_PORTFOLIO_PATHS,
            None,
        )?;
        let mut set = OutputSet::for_dir(
            RunManifest::new("backtest", a, Some(settings.seed)),
            &a.out_dir,
        )?;
        write_portfolio_backtest(&report, &a.out_dir, &mut set)?;
        set.finish()?;
        print!("{}", to_json(&report)?);
        return Ok(());
    }
    let (Some(train), Some(test), Some(target)) = (&a.train_prices, &a.test_prices, a.target_std)
    else {
        return Err(CliError::Usage(
            "give --portfolio, or --train-prices, --test-prices and --target-std".into(),
        ));
    };
    let settings = FitSettings {
        stage: a.stage,
        tol: a.tol.unwrap_or(DEFAULT_MC_TOL),
        n_paths: a.mc.n_paths.unwrap_or(DEFAULT_PATHS),
        seed: a.mc.seed,
    };
    let report = run_single_backtest(
        train,
        test,
        &a.price_column,
        target,
        a.v0.unwrap_or(1.0),
        &settings,
    )?;
    let mut set = OutputSet::for_dir(RunManifest::new("backtest", a, Some(a.mc.seed)), &a.out_dir)?;
    write_single_backtest(&report, &a.out_dir, &mut set)?;
    set.finish()?;
    print!("{}", to_json(&report)?);
    Ok(())
}

pub const TOY_MU: f64 = -0.1;
pub const TOY_SIGMA: f64 = 0.15;
pub const TOY_TARGET: f64 = 0.3;
pub const TOY_STAGES: [usize; 4] = [10, 30, 60, 90];

#[derive(Serialize)]
struct ToyRow {
    stage: usize,
    k_star: f64,
    expected_gain: f64,
    achieved_std: f64,
    s_max: f64,
}

#[derive(Serialize)]
struct ToyReport {
    mu: f64,
    sigma: f64,
    v0: f64,
    target_std: f64,
    rows: Vec<ToyRow>,
}

#[derive(Serialize)]
struct UnevenRow {
    stage: usize,
    expected_gain: f64,
}

#[derive(Serialize)]
struct UnevenReport {
    alpha: f64,
    k_gain: f64,
    mu: f64,
    two_stage_quarter_drift: f64,
    rows: Vec<UnevenRow>,
}

fn cmd_repro(a: &ReproArgs) -> Result<(), CliError> {
    let dir = &a.out_dir;
    match a.preset {
        Preset::Toy => {
            let mut set = OutputSet::for_dir(RunManifest::new("repro", a, None), dir)?;
            let mut rows = Vec::new();
            for stage in TOY_STAGES {
                let r = solve_optimal_gain(
                    TOY_MU,
                    TOY_SIGMA * TOY_SIGMA,
                    1.0,
                    stage,
                    1.0,
                    TOY_TARGET,
                    DEFAULT_TOL,
                )?;
                rows.push(ToyRow {
                    stage,
                    k_star: r.k_star,
                    expected_gain: r.expected_gain,
                    achieved_std: r.achieved_std,
                    s_max: r.s_max,
                });
                let curve = build_curve(TOY_MU, TOY_SIGMA * TOY_SIGMA, 1.0, stage, 1.0, 201)?;
                set.write(
                    &dir.join(format!("toy_curve_k{stage}.csv")),
                    curve_csv(&curve)?.as_bytes(),
                )?;
            }
            let report = ToyReport {
                mu: TOY_MU,
                sigma: TOY_SIGMA,
                v0: 1.0,
                target_std: TOY_TARGET,
                rows,
            };
            let text = to_json(&report)?;
            set.write(&dir.join("toy.json"), text.as_bytes())?;
            set.finish()?;
            print!("{text}");
        }
        Preset::UnevenAlpha => {
            let rows = (1..=10)
                .map(|stage| {
                    Ok(UnevenRow {
                        stage,
                        expected_gain: expected_gain(0.25, 0.5, stage, 0.5, 1.0)?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let report = UnevenReport {
                alpha: 0.25,
                k_gain: 0.5,
                mu: 0.5,
                two_stage_quarter_drift: dlf_core::analytics::expected_gain_scaled(0.25, 0.25, 2),
                rows,
            };
            let text = to_json(&report)?;
            let mut set = OutputSet::for_dir(RunManifest::new("repro", a, None), dir)?;
            set.write(&dir.join("uneven_alpha.json"), text.as_bytes())?;
            set.finish()?;
            print!("{text}");
        }
        Preset::Tsla => {
            let (Some(train), Some(test)) = (&a.train_prices, &a.test_prices) else {
                return Err(CliError::Usage(
                    "the tsla preset needs --train-prices and --test-prices".into(),
                ));
            };
            let n = a.mc.n_paths.unwrap_or(DEFAULT_PATHS);
            let settings = FitSettings {
                stage: None,
                tol: DEFAULT_MC_TOL,
                n_paths: n,
                seed: a.mc.seed,
            };
            let report = run_single_backtest(train, test, &a.price_column, 0.08, 1.0, &settings)?;
            let series = load_prices_csv(train, &a.price_column)?;
            let model = ReturnModel::from_pmf(pmf_from_returns(&series.returns())?);
            let curve =
                build_curve_empirical(&model, 1.0, report.training.n_returns, 51, n, a.mc.seed)?;
            let mut set = OutputSet::for_dir(RunManifest::new("repro", a, Some(a.mc.seed)), dir)?;
            write_single_backtest(&report, dir, &mut set)?;
            set.write(&dir.join("curve.csv"), curve_csv(&curve)?.as_bytes())?;
            set.finish()?;
            print!("{}", to_json(&report)?);
        }
        Preset::ThreeStock => {
            let Some(path) = &a.portfolio else {
                return Err(CliError::Usage(
                    "the three-stock preset needs --portfolio".into(),
                ));
            };
            let (report, settings) = run_portfolio_backtest(
                path,
                &a.price_column,
                None,
                100.0,
                None,
                None,
                &a.mc,
                DEFAULT_PORTFOLIO_PATHS,
                Some(&[0.08, 0.01, 0.02]),
            )?;
            let mut set =
                OutputSet::for_dir(RunManifest::new("repro", a, Some(settings.seed)), dir)?;
            write_portfolio_backtest(&report, dir, &mut set)?;
            set.finish()?;
            print!("{}", to_json(&report)?);
        }
    }
    Ok(())
}
