//! Multi-factor Vasicek credit-portfolio model.
//!
//! Counterparty `i` in a sub-portfolio tied to factor `j` has standardized
//! asset value `V_i = rho_i Y_j + sqrt(1 - rho_i²) eps_i` and defaults when
//! `V_i < Φ⁻¹(PD_i)`. The factors `Y` have correlation matrix `S = α αᵀ`.

mod normal;
mod sim;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::sorted_quantile;

pub use normal::{normal_cdf, normal_inv_cdf, normal_pdf};
pub use sim::{monte_carlo_invocations, simulate_losses, StratifiedSampler};

/// Homogeneous group of counterparties sharing one systematic factor.
///
/// `ead` is the total exposure of the group, split equally among its
/// `counterparties`; `factor` is a 0-based index into the factor matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPortfolio {
    #[serde(default)]
    pub name: String,
    pub ead: f64,
    pub pd: f64,
    pub lgd: f64,
    pub rho: f64,
    pub factor: usize,
    pub counterparties: u64,
}

impl SubPortfolio {
    /// Loss when a single counterparty defaults.
    pub fn obligor_loss(&self) -> f64 {
        self.ead * self.lgd / self.counterparties as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    pub sub_portfolios: Vec<SubPortfolio>,
}

impl PortfolioSpec {
    /// One homogeneous group on factor 0.
    pub fn homogeneous(counterparties: u64, pd: f64, rho: f64, lgd: f64, ead: f64) -> Self {
        Self {
            sub_portfolios: vec![SubPortfolio {
                name: "homogeneous".into(),
                ead,
                pd,
                lgd,
                rho,
                factor: 0,
                counterparties,
            }],
        }
    }

    pub fn validate(&self, factors: Option<usize>) -> Result<()> {
        if self.sub_portfolios.is_empty() {
            return Err(Error::invalid("portfolio has no sub-portfolios"));
        }
        for (k, s) in self.sub_portfolios.iter().enumerate() {
            let bad = |what: &str| Err(Error::invalid(format!("sub-portfolio {k}: {what}")));
            if !(s.ead >= 0.0 && s.ead.is_finite()) {
                return bad("exposure must be finite and non-negative");
            }
            if !(0.0..1.0).contains(&s.pd) {
                return bad("PD must lie in [0, 1)");
            }
            if !(0.0..=1.0).contains(&s.lgd) {
                return bad("LGD must lie in [0, 1]");
            }
            if s.rho.is_nan() || s.rho.abs() >= 1.0 {
                return bad("loading must satisfy |rho| < 1");
            }
            if s.counterparties == 0 {
                return bad("needs at least one counterparty");
            }
            if let Some(kf) = factors {
                if s.factor >= kf {
                    return bad(&format!("factor index {} out of range for {kf} factors", s.factor));
                }
            }
        }
        if self.total_ead() <= 0.0 {
            return Err(Error::invalid("total exposure must be positive"));
        }
        Ok(())
    }

    pub fn total_ead(&self) -> f64 {
        self.sub_portfolios.iter().map(|s| s.ead).sum()
    }

    /// Largest possible loss, `Σ EAD·LGD`.
    pub fn max_loss(&self) -> f64 {
        self.sub_portfolios.iter().map(|s| s.ead * s.lgd).sum()
    }

    pub fn expected_loss(&self) -> f64 {
        self.sub_portfolios.iter().map(|s| s.ead * s.lgd * s.pd).sum()
    }

    pub fn factor_count(&self) -> usize {
        self.sub_portfolios.iter().map(|s| s.factor + 1).max().unwrap_or(0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = crate::fsio::read_json(path)?;
        spec.validate(None)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub paths: usize,
    pub strata: usize,
    pub seed: u64,
    pub quantile: f64,
    pub antithetic: bool,
    /// Draw every counterparty's idiosyncratic term instead of the
    /// conditional-binomial shortcut.
    pub full_simulation: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            paths: 1_000_000,
            strata: 1000,
            seed: 0,
            quantile: 0.999,
            antithetic: false,
            full_simulation: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strata == 0 || self.paths < self.strata {
            return Err(Error::invalid(format!(
                "need paths >= strata >= 1, got {} paths and {} strata",
                self.paths, self.strata
            )));
        }
        if self.antithetic && !self.paths.is_multiple_of(2) {
            return Err(Error::invalid("antithetic sampling needs an even path count"));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::invalid(format!("quantile must lie in (0, 1), got {}", self.quantile)));
        }
        Ok(())
    }
}

/// Sorted loss samples with path weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDistribution {
    losses: Vec<f64>,
    weights: Vec<f64>,
}

impl LossDistribution {
    pub fn new(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("empty loss distribution"));
        }
        if pairs.iter().any(|(l, w)| !l.is_finite() || !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::NonFinite("loss samples or weights".into()));
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            losses: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn equally_weighted(mut losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::invalid("empty loss distribution"));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("loss samples".into()));
        }
        losses.sort_by(f64::total_cmp);
        let w = 1.0 / losses.len() as f64;
        let weights = vec![w; losses.len()];
        Ok(Self { losses, weights })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.losses.iter().zip(&self.weights).map(|(l, w)| l * w).sum()
    }

    /// Standard error of the mean, treating paths as independent.
    pub fn mean_standard_error(&self) -> f64 {
        let m = self.mean();
        let var: f64 = self.losses.iter().zip(&self.weights).map(|(l, w)| w * (l - m).powi(2)).sum();
        let n = self.len() as f64;
        (var * n / (n - 1.0).max(1.0) / n).sqrt()
    }

    fn equal_weights(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    /// Distribution-free standard error of the `q`-quantile from the spread
    /// of order statistics one binomial standard deviation either side.
    pub fn quantile_standard_error(&self, q: f64) -> f64 {
        let n = self.len() as f64;
        let half = (n * q * (1.0 - q)).sqrt();
        let at = |rank: f64| self.losses[(rank.round().max(1.0) as usize).min(self.len()) - 1];
        0.5 * (at(n * q + half) - at(n * q - half))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("loss,weight\n");
        for (l, w) in self.losses.iter().zip(&self.weights) {
            out.push_str(&format!("{l},{w}\n"));
        }
        out
    }
}

/// Weighted empirical quantile with the left-continuous inverse CDF:
/// the smallest loss whose cumulative weight reaches `q`.
pub fn var_quantile(dist: &LossDistribution, q: f64) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::invalid("empty loss distribution"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile must lie in [0, 1], got {q}")));
    }
    if dist.equal_weights() {
        return Ok(sorted_quantile(&dist.losses, q));
    }
    let mut cum = 0.0;
    for (l, w) in dist.losses.iter().zip(&dist.weights) {
        cum += w;
        if cum >= q - 1e-12 {
            return Ok(*l);
        }
    }
    Ok(*dist.losses.last().unwrap())
}

/// Asymptotic single-factor VaR:
/// `EAD·LGD·Φ((Φ⁻¹(PD) + rho Φ⁻¹(q)) / sqrt(1 - rho²))`.
pub fn vasicek_closed_form(pd: f64, rho: f64, q: f64, lgd: f64, total_ead: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(Error::invalid(format!("loading must satisfy |rho| < 1, got {rho}")));
    }
    let arg = (normal_inv_cdf(pd)? + rho * normal_inv_cdf(q)?) / (1.0 - rho * rho).sqrt();
    Ok(total_ead * lgd * normal_cdf(arg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarReport {
    pub var: f64,
    pub standard_error: f64,
    pub quantile: f64,
    pub expected_loss: f64,
    pub max_loss: f64,
    pub paths: usize,
    pub strata: usize,
    pub seed: u64,
}

impl VarReport {
    pub fn new(dist: &LossDistribution, portfolio: &PortfolioSpec, cfg: &SimConfig) -> Result<Self> {
        Ok(Self {
            var: var_quantile(dist, cfg.quantile)?,
            standard_error: dist.quantile_standard_error(cfg.quantile),
            quantile: cfg.quantile,
            expected_loss: dist.mean(),
            max_loss: portfolio.max_loss(),
            paths: dist.len(),
            strata: cfg.strata,
            seed: cfg.seed,
        })
    }
}
