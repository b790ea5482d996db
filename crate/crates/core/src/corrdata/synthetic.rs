//! Regime-switching linear factor market, used in place of vendor data.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ReturnPanel;
use crate::error::{Error, Result};
use crate::rng;

/// Factor loadings in force from month `start` until the next regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub start: usize,
    /// `assets x factors`, each row with squared norm at most 1.
    pub loadings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMarketConfig {
    pub assets: usize,
    pub months: usize,
    pub factors: usize,
    pub regimes: Vec<Regime>,
    /// Monthly return volatility of every asset.
    pub volatility: f64,
}

impl SyntheticMarketConfig {
    pub fn one_factor(assets: usize, months: usize, loading: f64) -> Self {
        Self {
            assets,
            months,
            factors: 1,
            regimes: vec![Regime {
                start: 0,
                loadings: vec![vec![loading]; assets],
            }],
            volatility: 0.04,
        }
    }

    /// Three regimes over a market factor and a two-sector factor: a calm
    /// sector-driven market, a crisis where the market factor dominates, and
    /// a dispersed regime with graded market betas.
    pub fn regime_switching(assets: usize, months: usize) -> Self {
        let sector = |i: usize| if i < assets / 2 { 1.0 } else { -1.0 };
        let calm = (0..assets).map(|i| vec![0.55, 0.35 * sector(i)]).collect();
        let crisis = (0..assets).map(|i| vec![0.85, 0.15 * sector(i)]).collect();
        let dispersed = (0..assets)
            .map(|i| {
                let grade = if assets > 1 { i as f64 / (assets - 1) as f64 } else { 0.0 };
                vec![0.25 + 0.55 * grade, 0.3 * sector(i)]
            })
            .collect();
        Self {
            assets,
            months,
            factors: 2,
            regimes: vec![
                Regime { start: 0, loadings: calm },
                Regime {
                    start: months * 7 / 20,
                    loadings: crisis,
                },
                Regime {
                    start: months * 13 / 20,
                    loadings: dispersed,
                },
            ],
            volatility: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.assets == 0 || self.months == 0 {
            return Err(Error::invalid("synthetic market needs positive asset and month counts"));
        }
        if self.factors == 0 {
            return Err(Error::invalid("synthetic market needs at least one factor"));
        }
        if !(self.volatility > 0.0 && self.volatility.is_finite()) {
            return Err(Error::invalid("volatility must be positive"));
        }
        if self.regimes.first().map(|r| r.start) != Some(0) {
            return Err(Error::invalid("the first regime must start at month 0"));
        }
        for (k, pair) in self.regimes.windows(2).enumerate() {
            if pair[1].start <= pair[0].start || pair[1].start >= self.months {
                return Err(Error::invalid(format!("regime {} start is out of order", k + 1)));
            }
        }
        for (k, regime) in self.regimes.iter().enumerate() {
            if regime.loadings.len() != self.assets {
                return Err(Error::Shape(format!("regime {k} has {} loading rows", regime.loadings.len())));
            }
            for (i, row) in regime.loadings.iter().enumerate() {
                if row.len() != self.factors {
                    return Err(Error::Shape(format!("regime {k} asset {i} has {} loadings", row.len())));
                }
                if row.iter().any(|l| !(-1.0..=1.0).contains(l)) {
                    return Err(Error::invalid(format!("regime {k} asset {i} has a loading outside [-1, 1]")));
                }
                if row.iter().map(|l| l * l).sum::<f64>() > 1.0 + 1e-12 {
                    return Err(Error::invalid(format!("regime {k} asset {i}: squared loadings exceed 1")));
                }
            }
        }
        Ok(())
    }
}

/// Month labels `YYYY-MM` counted from February 1997.
fn month_label(offset: usize) -> String {
    let total = 1997 * 12 + 1 + offset;
    format!("{:04}-{:02}", total / 12, total % 12 + 1)
}

/// Simulate monthly returns `r_i = vol * (Σ_k L_ik f_k + sqrt(1 - Σ_k L_ik²) e_i)`.
pub fn generate_synthetic_market(config: &SyntheticMarketConfig, seed: u64) -> Result<ReturnPanel> {
    config.validate()?;
    let (m, t, k) = (config.assets, config.months, config.factors);
    let mut rng = rng::substream(seed, "synthetic-market");
    let mut values = DMatrix::zeros(t, m);
    let mut regime = 0;
    let mut factors = vec![0.0; k];
    for month in 0..t {
        while regime + 1 < config.regimes.len() && config.regimes[regime + 1].start <= month {
            regime += 1;
        }
        let loadings = &config.regimes[regime].loadings;
        for f in factors.iter_mut() {
            *f = StandardNormal.sample(&mut rng);
        }
        for (i, row) in loadings.iter().enumerate() {
            let systematic: f64 = row.iter().zip(&factors).map(|(l, f)| l * f).sum();
            let idio_weight = (1.0 - row.iter().map(|l| l * l).sum::<f64>()).max(0.0).sqrt();
            let e: f64 = StandardNormal.sample(&mut rng);
            values[(month, i)] = config.volatility * (systematic + idio_weight * e);
        }
    }
    let ids = (0..m).map(|i| format!("idx{i:02}")).collect();
    let stamps = (0..t).map(month_label).collect();
    ReturnPanel::new(ids, stamps, values)
}
