//! Portfolio backtest configuration (TOML).
//!
//! ```toml
//! v0 = 100.0
//! n_paths = 20000              # optional
//! seed = 42                    # optional
//! stage = 125                  # optional, defaults to the training length
//! tol = 1e-3                   # optional
//! price_column = "adj_close"   # optional default for every asset
//!
//! [[asset]]
//! ticker = "TSLA"              # optional, defaults to the file stem
//! train_prices = "tsla_2019h1.csv"
//! test_prices = "tsla_2019h2.csv"
//! target_std = 0.08
//! price_column = "close"       # optional override
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioFile {
    pub v0: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub stage: Option<usize>,
    pub tol: Option<f64>,
    pub price_column: Option<String>,
    #[serde(rename = "asset")]
    pub assets: Vec<AssetEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub ticker: Option<String>,
    pub train_prices: PathBuf,
    pub test_prices: PathBuf,
    pub target_std: Option<f64>,
    pub price_column: Option<String>,
}

impl PortfolioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: PortfolioFile = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if cfg.assets.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: at least one [[asset]] is required",
                path.display()
            )));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for a in &mut cfg.assets {
            a.train_prices = base.join(&a.train_prices);
            a.test_prices = base.join(&a.test_prices);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.toml");
        std::fs::write(
            &p,
            "v0 = 100.0\nseed = 7\n[[asset]]\ntrain_prices = \"a.csv\"\ntest_prices = \"b.csv\"\ntarget_std = 0.08\n",
        )
        .unwrap();
        let cfg = PortfolioFile::load(&p).unwrap();
        assert_eq!(cfg.v0, Some(100.0));
        assert_eq!(cfg.assets[0].train_prices, dir.path().join("a.csv"));
    }

    #[test]
    fn rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.toml");
        std::fs::write(
            &p,
            "v0 = 1.0\nbogus = 1\n[[asset]]\ntrain_prices = \"a\"\ntest_prices = \"b\"\n",
        )
        .unwrap();
        assert!(matches!(PortfolioFile::load(&p), Err(CliError::Usage(_))));
    }
}
