//! Shared fixtures for the criterion benchmarks.

use latentvar::corrdata::{generate_synthetic_market, rolling_correlations, SyntheticMarketConfig};
use latentvar::facts::mean_matrix;
use latentvar::CorrelationMatrix;

/// Mean correlation matrix of a synthetic market with `assets` names.
pub fn market_matrix(assets: usize) -> CorrelationMatrix {
    let cfg = SyntheticMarketConfig::regime_switching(assets, 160);
    let returns = generate_synthetic_market(&cfg, 3).expect("valid market config");
    let panel = rolling_correlations(&returns, 60, 20).expect("enough months");
    mean_matrix(&panel).expect("non-empty panel")
}
