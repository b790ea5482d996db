//! Run configuration: one JSON file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use latentvar::corrdata::{CsvSchema, InputKind};
use latentvar::creditrisk::{PortfolioSpec, SubPortfolio};
use latentvar::facts::Linkage;
use latentvar::neural::Activation;
use latentvar::rng::derive_seed;
use latentvar::{BootstrapConfig, SimConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::manifest::sha256_hex;
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticData {
    pub assets: usize,
    pub months: usize,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self { assets: 44, months: 305 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Monthly returns or prices CSV; when absent a synthetic market is generated.
    pub returns: Option<PathBuf>,
    pub kind: InputKind,
    pub date_column: Option<String>,
    pub synthetic: SyntheticData,
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            kind: self.kind,
            date_column: self.date_column.clone().or(CsvSchema::default().date_column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub count: usize,
    /// Fraction of the latent bounding-box diagonal added on every side.
    pub margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { count: 132, margin: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { rows: 3, cols: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub window: usize,
    pub stride: usize,
    pub validation_fraction: f64,
    /// Nested seeds are ignored; every stage derives its own from `seed`.
    pub train: TrainConfig,
    /// Also train a deterministic and two linear autoencoders for comparison.
    pub compare_models: bool,
    /// Schedule for the linear comparison models, which converge slowly at the VAE settings.
    pub linear_train: TrainConfig,
    pub grid: GridConfig,
    pub partition: PartitionConfig,
    pub linkage: Linkage,
    pub portfolio_file: Option<PathBuf>,
    pub portfolio: Option<PortfolioSpec>,
    pub simulation: SimConfig,
    pub bootstrap: BootstrapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            data: DataConfig::default(),
            window: 100,
            stride: 1,
            validation_fraction: 0.3,
            train: TrainConfig::default(),
            compare_models: true,
            linear_train: TrainConfig {
                epochs: 8000,
                learning_rate: 1e-3,
                batch_size: 4,
                hidden: Vec::new(),
                hidden_activation: Activation::Linear,
                ..TrainConfig::default()
            },
            grid: GridConfig::default(),
            partition: PartitionConfig::default(),
            linkage: Linkage::Average,
            portfolio_file: None,
            portfolio: None,
            simulation: SimConfig::default(),
            bootstrap: BootstrapConfig::default(),
        }
    }
}

/// Named stages that draw random numbers.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Market,
    Split,
    Train,
    Grid,
    Simulation,
    Bootstrap,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Market => "synthetic-market",
            Stage::Split => "dataset-split",
            Stage::Train => "autoencoder",
            Stage::Grid => "latent-grid",
            Stage::Simulation => "credit-simulation",
            Stage::Bootstrap => "latent-bootstrap",
        }
    }
}

impl RunConfig {
    /// Load a config; relative data and portfolio paths are resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("reading config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError(format!("parsing config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.data.returns);
        resolve(&mut cfg.portfolio_file);
        resolve(&mut cfg.out);
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn seed_for(&self, stage: Stage) -> u64 {
        derive_seed(self.seed, stage.name())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed_for(Stage::Train),
            ..self.train.clone()
        }
    }

    pub fn linear_train_config(&self, latent_dim: usize) -> TrainConfig {
        TrainConfig {
            seed: self.seed_for(Stage::Train),
            latent_dim,
            ..self.linear_train.clone()
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed_for(Stage::Simulation),
            ..self.simulation.clone()
        }
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            seed: self.seed_for(Stage::Bootstrap),
            ..self.bootstrap.clone()
        }
    }

    /// Hash of the effective configuration, excluding the output location.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError(m).into());
        if self.window < 2 || self.stride == 0 {
            return bad(format!(
                "window must be >= 2 and stride >= 1, got {} and {}",
                self.window, self.stride
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        if self.grid.count == 0 || self.grid.margin.is_nan() || self.grid.margin < 0.0 {
            return bad("grid count must be positive and margin non-negative".into());
        }
        if self.partition.rows == 0 || self.partition.cols == 0 {
            return bad("partition needs at least one row and column".into());
        }
        if self.portfolio.is_some() && self.portfolio_file.is_some() {
            return bad("give either `portfolio` or `portfolio_file`, not both".into());
        }
        self.simulation.validate().map_err(|e| ConfigError(format!("simulation: {e}")))?;
        self.bootstrap.validate().map_err(|e| ConfigError(format!("bootstrap: {e}")))?;
        Ok(())
    }

    /// Portfolio from the config, or the default desk portfolio over `factors`.
    pub fn portfolio(&self, factors: usize, override_path: Option<&Path>) -> Result<PortfolioSpec> {
        let spec = match (override_path.or(self.portfolio_file.as_deref()), &self.portfolio) {
            (Some(path), _) => PortfolioSpec::load(path).with_context(|| format!("creditrisk: portfolio {}", path.display()))?,
            (None, Some(p)) => p.clone(),
            (None, None) => desk_portfolio(factors),
        };
        spec.validate(Some(factors)).context("creditrisk: portfolio")?;
        Ok(spec)
    }
}

/// One sub-portfolio per factor with graded credit quality and size.
pub fn desk_portfolio(factors: usize) -> PortfolioSpec {
    let n = factors.max(1);
    PortfolioSpec {
        sub_portfolios: (0..n)
            .map(|j| {
                let grade = j as f64 / (n.max(2) - 1) as f64;
                SubPortfolio {
                    name: format!("sector{j:02}"),
                    ead: 1_000_000.0 * (1.0 + grade),
                    pd: 0.005 + 0.02 * grade,
                    lgd: 0.45,
                    rho: 0.5,
                    factor: j,
                    counterparties: 250,
                }
            })
            .collect(),
    }
}
