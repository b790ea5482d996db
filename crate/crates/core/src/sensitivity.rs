//! VaR surface over the latent space and bootstrapped latent dynamics.

use delaunator::{triangulate, Point};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoders::Autoencoder;
use crate::corrdata::{CorrelationMatrix, MatrixPanel};
use crate::creditrisk::{simulate_losses, var_quantile, PortfolioSpec, SimConfig};
use crate::error::{Error, Result};
use crate::latent::{generate_synthetic_panel, LatentGrid, LatentSeries};
use crate::rng;
use crate::stats::{self, sorted_quantile, Histogram};

const BARYCENTRIC_SLACK: f64 = 1e-12;
const DISTRIBUTION_BINS: usize = 30;

/// Maps a correlation matrix to a VaR figure.
pub trait VarEvaluator: Sync {
    fn var(&self, s: &CorrelationMatrix) -> Result<f64>;
}

/// Monte Carlo VaR with the same seed at every matrix, so differences
/// between grid points are not swamped by simulation noise.
#[derive(Debug, Clone)]
pub struct MonteCarloVar {
    pub portfolio: PortfolioSpec,
    pub config: SimConfig,
}

impl VarEvaluator for MonteCarloVar {
    fn var(&self, s: &CorrelationMatrix) -> Result<f64> {
        let dist = simulate_losses(&self.portfolio, s, &self.config)?;
        var_quantile(&dist, self.config.quantile)
    }
}

/// Piecewise-linear interpolant on the Delaunay triangulation of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSurface {
    points: Vec<[f64; 2]>,
    values: Vec<f64>,
    triangles: Vec<[usize; 3]>,
    hull: Vec<usize>,
}

/// Result of one interpolation; `clamped` marks a point projected onto the hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    pub clamped: bool,
}

impl VarSurface {
    pub const METHOD: &'static str = "delaunay-linear";

    pub fn new(points: Vec<[f64; 2]>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Shape(format!("{} points but {} values", points.len(), values.len())));
        }
        if points.iter().flatten().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surface points or values".into()));
        }
        let pts: Vec<Point> = points.iter().map(|p| Point { x: p[0], y: p[1] }).collect();
        let tri = triangulate(&pts);
        if tri.triangles.is_empty() {
            return Err(Error::invalid("surface needs at least three non-collinear points"));
        }
        let triangles = tri.triangles.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect();
        Ok(Self {
            points,
            values,
            triangles,
            hull: tri.hull,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn barycentric(&self, t: &[usize; 3], z: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = t.map(|i| self.points[i]);
        let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
        let l1 = ((b[1] - c[1]) * (z[0] - c[0]) + (c[0] - b[0]) * (z[1] - c[1])) / det;
        let l2 = ((c[1] - a[1]) * (z[0] - c[0]) + (a[0] - c[0]) * (z[1] - c[1])) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Interpolate inside the hull; outside it, either fail or project onto
    /// the nearest hull edge.
    pub fn interpolate(&self, z: [f64; 2], allow_extrapolation: bool) -> Result<Interpolated> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interpolation point".into()));
        }
        if let Some(i) = self.points.iter().position(|p| *p == z) {
            return Ok(Interpolated {
                value: self.values[i],
                clamped: false,
            });
        }
        for t in &self.triangles {
            let w = self.barycentric(t, z);
            if w.iter().all(|&x| x >= -BARYCENTRIC_SLACK) {
                let w = w.map(|x| x.max(0.0));
                let sum = w[0] + w[1] + w[2];
                let value = (0..3).map(|k| w[k] * self.values[t[k]]).sum::<f64>() / sum;
                return Ok(Interpolated { value, clamped: false });
            }
        }
        if !allow_extrapolation {
            return Err(Error::Extrapolation(z[0], z[1]));
        }
        Ok(Interpolated {
            value: self.nearest_hull_value(z),
            clamped: true,
        })
    }

    fn nearest_hull_value(&self, z: [f64; 2]) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..self.hull.len() {
            let (i, j) = (self.hull[k], self.hull[(k + 1) % self.hull.len()]);
            let (a, b) = (self.points[i], self.points[j]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = if len2 > 0.0 {
                (((z[0] - a[0]) * d[0] + (z[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            let dist = (z[0] - p[0]).hypot(z[1] - p[1]);
            if dist < best.0 {
                best = (dist, (1.0 - t) * self.values[i] + t * self.values[j]);
            }
        }
        best.1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("z1,z2,var\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut points = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(format!("surface row {row}: {e}")))?;
            let field = |k: usize| -> Result<f64> {
                let raw = rec.get(k).ok_or(Error::MissingValue { row, col: k })?;
                raw.parse().map_err(|_| Error::NonNumeric {
                    row,
                    col: k,
                    value: raw.to_string(),
                })
            };
            points.push([field(0)?, field(1)?]);
            values.push(field(2)?);
        }
        Self::new(points, values)
    }
}

/// Evaluate VaR at already decoded and repaired grid matrices.
pub fn surface_from_panel(grid: &LatentGrid, panel: &MatrixPanel, evaluator: &dyn VarEvaluator) -> Result<VarSurface> {
    if grid.len() != panel.len() {
        return Err(Error::Shape(format!("{} grid points but {} matrices", grid.len(), panel.len())));
    }
    let values = panel
        .matrices
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            evaluator.var(s).map_err(|e| Error::GridPoint {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    VarSurface::new(grid.points.clone(), values)
}

/// Decode, repair and price every grid point.
pub fn build_var_surface<A: Autoencoder + Sync>(
    model: &A,
    grid: &LatentGrid,
    labels: &[String],
    evaluator: &dyn VarEvaluator,
) -> Result<VarSurface> {
    let panel = generate_synthetic_panel(model, grid, labels)?;
    surface_from_panel(grid, &panel, evaluator)
}

pub fn interpolate_var(surface: &VarSurface, z: [f64; 2], allow_extrapolation: bool) -> Result<f64> {
    Ok(surface.interpolate(z, allow_extrapolation)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapScheme {
    Simple,
    #[default]
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub scheme: BootstrapScheme,
    pub block_length: usize,
    pub horizon: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            scheme: BootstrapScheme::Block,
            block_length: 11,
            horizon: 12,
            resamples: 1000,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_length == 0 || self.horizon == 0 || self.resamples == 0 {
            return Err(Error::invalid("block length, horizon and resamples must all be at least 1"));
        }
        Ok(())
    }

    /// Effective block length; the simple scheme is the block scheme with length 1.
    pub fn effective_block_length(&self) -> usize {
        match self.scheme {
            BootstrapScheme::Simple => 1,
            BootstrapScheme::Block => self.block_length,
        }
    }
}

/// Horizon endpoints from resampled joint first differences of the latent means.
pub fn bootstrap_latent_paths(series: &LatentSeries, cfg: &BootstrapConfig) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    let block = cfg.effective_block_length();
    if series.len() < block + 1 || series.len() < 2 {
        return Err(Error::invalid(format!(
            "latent series of length {} is too short for blocks of {block}",
            series.len()
        )));
    }
    let diffs: Vec<[f64; 2]> = (1..series.len())
        .map(|t| [series.mu1[t] - series.mu1[t - 1], series.mu2[t] - series.mu2[t - 1]])
        .collect();
    let last = series.last().expect("series checked nonempty");
    let m = diffs.len();
    let mut rng = rng::substream(cfg.seed, "latent-bootstrap");
    let endpoints = (0..cfg.resamples)
        .map(|_| {
            let mut end = last;
            let mut steps = 0;
            while steps < cfg.horizon {
                let start = rng.random_range(0..m);
                for k in 0..block.min(cfg.horizon - steps) {
                    let d = diffs[(start + k) % m];
                    end[0] += d[0];
                    end[1] += d[1];
                }
                steps += block.min(cfg.horizon - steps);
            }
            end
        })
        .collect();
    Ok(endpoints)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDistribution {
    pub values: Vec<f64>,
    pub clamped: usize,
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub histogram: Histogram,
}

/// Summary without the per-endpoint samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDistributionSummary {
    pub samples: usize,
    pub clamped: usize,
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl VarDistribution {
    pub fn summary(&self) -> VarDistributionSummary {
        VarDistributionSummary {
            samples: self.values.len(),
            clamped: self.clamped,
            mean: self.mean,
            q05: self.q05,
            q50: self.q50,
            q95: self.q95,
        }
    }

    pub fn to_csv(&self, endpoints: &[[f64; 2]]) -> String {
        let mut out = String::from("z1,z2,var\n");
        for (p, v) in endpoints.iter().zip(&self.values) {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], v));
        }
        out
    }
}

/// Interpolated VaR at every endpoint; endpoints outside the hull are clamped
/// to it and counted.
pub fn var_distribution(surface: &VarSurface, endpoints: &[[f64; 2]]) -> Result<VarDistribution> {
    if endpoints.is_empty() {
        return Err(Error::invalid("no bootstrap endpoints"));
    }
    let mut values = Vec::with_capacity(endpoints.len());
    let mut clamped = 0;
    for &z in endpoints {
        let r = surface.interpolate(z, true)?;
        clamped += r.clamped as usize;
        values.push(r.value);
    }
    if clamped == endpoints.len() {
        return Err(Error::Extrapolation(endpoints[0][0], endpoints[0][1]));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    Ok(VarDistribution {
        mean: stats::mean(&values),
        q05: sorted_quantile(&sorted, 0.05),
        q50: sorted_quantile(&sorted, 0.5),
        q95: sorted_quantile(&sorted, 0.95),
        histogram: Histogram::new(&values, lo, hi, DISTRIBUTION_BINS),
        values,
        clamped,
    })
}
