//! Per-period return distributions, empirical PMFs built from price
//! history, and seeded sampling.
//!
//! Two variance conventions coexist in this crate. A PMF built here is
//! treated as the exact distribution of the returns, so its variance uses
//! the 1/n (population) normalisation. Monte-Carlo estimates in
//! [`crate::montecarlo`] use 1/(n-1).

use std::cmp::Ordering;
use std::io::Read;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used for every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// Builds the generator for `(seed, stream)`.
///
/// Distinct streams of the same seed are independent, which is how batches
/// and assets get their own reproducible sequences.
pub fn rng_for(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Certified support bounds of a return distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnBounds {
    x_min: f64,
    x_max: f64,
}

impl ReturnBounds {
    /// Accepts any finite `-1 < x_min <= x_max`.
    ///
    /// Point-mass and one-sided models are allowed here; use
    /// [`ReturnBounds::new_two_sided`] to insist on `x_min < 0 < x_max`.
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min <= -1.0 || x_min > x_max {
            return Err(Error::InvalidBounds { x_min, x_max });
        }
        Ok(Self { x_min, x_max })
    }

    pub fn new_two_sided(x_min: f64, x_max: f64) -> Result<Self> {
        let b = Self::new(x_min, x_max)?;
        if b.is_two_sided() {
            Ok(b)
        } else {
            Err(Error::InvalidBounds { x_min, x_max })
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// `-1 < x_min < 0 < x_max`.
    pub fn is_two_sided(&self) -> bool {
        self.x_min < 0.0 && self.x_max > 0.0
    }

    /// Largest admissible feedback gain, `min(1, 1/x_max)`.
    pub fn k_max(&self) -> f64 {
        if self.x_max > 1.0 {
            1.0 / self.x_max
        } else {
            1.0
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Smallest bounds covering both `self` and `other`.
    pub fn union(&self, other: &ReturnBounds) -> ReturnBounds {
        ReturnBounds {
            x_min: self.x_min.min(other.x_min),
            x_max: self.x_max.max(other.x_max),
        }
    }

    /// Tightest bounds covering a list of returns.
    pub fn of_returns(returns: &[f64]) -> Result<Self> {
        let (lo, hi) = returns
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        if returns.is_empty() {
            return Err(Error::Empty);
        }
        Self::new(lo, hi)
    }
}

/// One support point of a discrete distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Discrete return distribution in canonical form: atoms sorted by value,
/// duplicates merged, weights positive and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPmf {
    atoms: Vec<Atom>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl EmpiricalPmf {
    /// Builds a PMF from `(value, weight)` pairs.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<Atom> = Vec::new();
        for (i, (value, weight)) in pairs.into_iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "atom {i} has non-finite value"
                )));
            }
            if value <= -1.0 {
                return Err(Error::ReturnBelowNegOne { index: i, value });
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "atom {i} has non-positive weight {weight}"
                )));
            }
            atoms.push(Atom { value, weight });
        }
        if atoms.is_empty() {
            return Err(Error::Empty);
        }
        atoms.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(Ordering::Equal));
        atoms.dedup_by(|next, kept| {
            if next.value == kept.value {
                kept.weight += next.weight;
                true
            } else {
                false
            }
        });
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.atoms[0].value
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].value
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.value).sum()
    }

    /// Exact variance of the distribution (1/n convention for equally weighted data).
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.atoms
            .iter()
            .map(|a| a.weight * (a.value - mu) * (a.value - mu))
            .sum()
    }

    pub fn bounds(&self) -> ReturnBounds {
        ReturnBounds {
            x_min: self.min(),
            x_max: self.max(),
        }
    }
}

/// How a [`ReturnModel`] was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    EmpiricalPmf,
    TwoPoint,
    UniformGrid,
}

/// Distribution of the per-period return with its support bounds and first
/// two moments.
///
/// Every model is discrete; the kinds differ only in how the atoms are laid
/// out. Bounds are always the extreme atoms, so both lie in the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnModel {
    kind: ModelKind,
    pmf: EmpiricalPmf,
    bounds: ReturnBounds,
    mu: f64,
    sigma2: f64,
}

impl ReturnModel {
    fn build(kind: ModelKind, pmf: EmpiricalPmf) -> Self {
        let bounds = pmf.bounds();
        let mu = pmf.mean();
        let sigma2 = pmf.variance().max(0.0);
        Self {
            kind,
            pmf,
            bounds,
            mu,
            sigma2,
        }
    }

    pub fn from_pmf(pmf: EmpiricalPmf) -> Self {
        Self::build(ModelKind::EmpiricalPmf, pmf)
    }

    /// `low` with probability `p_low`, `high` otherwise.
    pub fn two_point(low: f64, high: f64, p_low: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::InvalidModel(format!(
                "two-point model needs low < high, got {low} and {high}"
            )));
        }
        if !(p_low > 0.0 && p_low < 1.0) {
            return Err(Error::InvalidModel(format!(
                "two-point probability must lie in (0, 1), got {p_low}"
            )));
        }
        let pmf = EmpiricalPmf::new([(low, p_low), (high, 1.0 - p_low)])?;
        Ok(Self::build(ModelKind::TwoPoint, pmf))
    }

    /// Equiprobable `mu - sigma` / `mu + sigma`, the simplest law with the
    /// requested first two moments.
    pub fn two_point_from_moments(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidVariance(sigma * sigma));
        }
        if sigma == 0.0 {
            let pmf = EmpiricalPmf::new([(mu, 1.0)])?;
            return Ok(Self::build(ModelKind::TwoPoint, pmf));
        }
        Self::two_point(mu - sigma, mu + sigma, 0.5)
    }

    /// `n` equally spaced, equally weighted atoms spanning `[x_min, x_max]`.
    pub fn uniform_grid(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        ReturnBounds::new(x_min, x_max)?;
        if n < 2 || x_min == x_max {
            return Err(Error::InvalidModel(
                "uniform grid needs n >= 2 and x_min < x_max".into(),
            ));
        }
        let w = 1.0 / n as f64;
        let step = (x_max - x_min) / (n - 1) as f64;
        let pmf = EmpiricalPmf::new((0..n).map(|i| {
            let x = if i == n - 1 {
                x_max
            } else {
                x_min + step * i as f64
            };
            (x, w)
        }))?;
        Ok(Self::build(ModelKind::UniformGrid, pmf))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn pmf(&self) -> &EmpiricalPmf {
        &self.pmf
    }

    pub fn bounds(&self) -> ReturnBounds {
        self.bounds
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn sampler(&self) -> ReturnSampler {
        ReturnSampler::new(&self.pmf)
    }
}

/// Precomputed inverse-CDF sampler over a PMF.
#[derive(Debug, Clone)]
pub struct ReturnSampler {
    values: Vec<f64>,
    index: Option<WeightedIndex<f64>>,
}

impl ReturnSampler {
    pub fn new(pmf: &EmpiricalPmf) -> Self {
        let values: Vec<f64> = pmf.atoms().iter().map(|a| a.value).collect();
        let index = if values.len() > 1 {
            // Weights are validated positive and finite by EmpiricalPmf.
            Some(
                WeightedIndex::new(pmf.atoms().iter().map(|a| a.weight))
                    .expect("validated weights"),
            )
        } else {
            None
        };
        Self { values, index }
    }

    #[inline]
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.index {
            Some(idx) => self.values[idx.sample(rng)],
            None => self.values[0],
        }
    }

    pub fn fill<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for x in out {
            *x = self.draw(rng);
        }
    }
}

/// Draws `n` independent returns from `model`, deterministically for a given seed.
pub fn sample_path(model: &ReturnModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "path length must be at least 1".into(),
        ));
    }
    let sampler = model.sampler();
    let mut rng = rng_for(seed, 0);
    let mut out = vec![0.0; n];
    sampler.fill(&mut rng, &mut out);
    Ok(out)
}

/// Closing prices of one instrument in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    prices: Vec<f64>,
    dates: Option<Vec<String>>,
}

impl PriceSeries {
    pub fn new(
        ticker: impl Into<String>,
        prices: Vec<f64>,
        dates: Option<Vec<String>>,
    ) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::TooShort { len: prices.len() });
        }
        if let Some((index, &value)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::NonPositivePrice { index, value });
        }
        if let Some(d) = &dates {
            if d.len() != prices.len() || d.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidDates);
            }
        }
        Ok(Self {
            ticker: ticker.into(),
            prices,
            dates,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn dates(&self) -> Option<&[String]> {
        self.dates.as_deref()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.prices
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .collect()
    }
}

/// Simple per-period returns `(p[k+1] - p[k]) / p[k]`.
pub fn returns_from_prices(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::TooShort { len: prices.len() });
    }
    if let Some((index, &value)) = prices
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p > 0.0))
    {
        return Err(Error::NonPositivePrice { index, value });
    }
    Ok(prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// Equally weighted PMF over observed returns; repeated values are merged.
pub fn pmf_from_returns(returns: &[f64]) -> Result<EmpiricalPmf> {
    if returns.is_empty() {
        return Err(Error::Empty);
    }
    if let Some((index, &value)) = returns
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || **x <= -1.0)
    {
        return Err(Error::ReturnBelowNegOne { index, value });
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = sorted.len() as f64;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        atoms.push(Atom {
            value: v,
            weight: (j - i) as f64 / n,
        });
        i = j;
    }
    Ok(EmpiricalPmf { atoms })
}

/// Header names compare case-insensitively with spaces treated as
/// underscores, so `adj_close` finds `Adj Close`.
fn header_key(h: &str) -> String {
    h.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

/// Reads a price CSV (header row required) and takes prices from `column`.
///
/// A column named `date` (any case), if present, supplies the dates. The
/// ticker is taken from the file stem.
pub fn load_prices_csv(path: impl AsRef<Path>, column: &str) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_prices_csv(file, column, ticker)
}

pub fn read_prices_csv<R: Read>(
    reader: R,
    column: &str,
    ticker: impl Into<String>,
) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let wanted = header_key(column);
    let price_idx = headers
        .iter()
        .position(|h| header_key(h) == wanted)
        .ok_or_else(|| Error::MissingColumn {
            column: column.to_string(),
        })?;
    let date_idx = headers.iter().position(|h| h.eq_ignore_ascii_case("date"));

    let mut prices = Vec::new();
    let mut dates = date_idx.map(|_| Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        // Line 1 is the header.
        let row = i + 2;
        let rec = rec?;
        let raw = rec.get(price_idx).unwrap_or("");
        let price: f64 = raw
            .parse()
            .map_err(|e: std::num::ParseFloatError| Error::Parse {
                row,
                column: column.to_string(),
                message: format!("`{raw}`: {e}"),
            })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::NonPositivePrice {
                index: prices.len(),
                value: price,
            });
        }
        prices.push(price);
        if let (Some(d), Some(di)) = (dates.as_mut(), date_idx) {
            d.push(rec.get(di).unwrap_or("").to_string());
        }
    }
    PriceSeries::new(ticker, prices, dates)
}
