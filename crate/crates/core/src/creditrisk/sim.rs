//! Monte Carlo loss simulation.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Open01, StandardNormal};
use rayon::prelude::*;

use super::normal::{normal_cdf, normal_inv_cdf};
use super::{LossDistribution, PortfolioSpec, SimConfig};
use crate::corrdata::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::linalg::spectral_root;
use crate::rng;

/// Draws per seeded block; fixed so results do not depend on thread count.
const BLOCK: usize = 2048;

static INVOCATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of `simulate_losses` calls made by this process so far.
pub fn monte_carlo_invocations() -> usize {
    INVOCATIONS.load(Ordering::SeqCst)
}

/// Normal vectors whose first coordinate is stratified into equal-probability
/// strata, cycling through the strata in order; the rest are i.i.d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StratifiedSampler {
    pub strata: usize,
    pub dim: usize,
}

impl StratifiedSampler {
    pub fn new(strata: usize, dim: usize) -> Result<Self> {
        if strata == 0 || dim == 0 {
            return Err(Error::invalid("sampler needs at least one stratum and one dimension"));
        }
        Ok(Self { strata, dim })
    }

    /// Fill `out` with draw number `index` of the sequence.
    pub fn fill<R: Rng>(&self, index: usize, rng: &mut R, out: &mut [f64]) {
        let u: f64 = Open01.sample(rng);
        let stratum = (index % self.strata) as f64;
        let p = ((stratum + u) / self.strata as f64).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        out[0] = normal_inv_cdf(p).expect("probability kept inside (0, 1)");
        for v in &mut out[1..self.dim] {
            *v = StandardNormal.sample(rng);
        }
    }
}

struct Group {
    threshold: f64,
    rho: f64,
    idio: f64,
    factor: usize,
    count: u64,
    ead_lgd: f64,
    full: bool,
}

impl Group {
    fn loss<R: Rng>(&self, y: f64, rng: &mut R) -> Result<f64> {
        if self.threshold == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let defaults = if self.full {
            (0..self.count)
                .filter(|_| {
                    let eps: f64 = StandardNormal.sample(rng);
                    self.rho * y + self.idio * eps < self.threshold
                })
                .count() as u64
        } else {
            let p = normal_cdf((self.threshold - self.rho * y) / self.idio);
            Binomial::new(self.count, p)
                .map_err(|e| Error::NonFinite(format!("conditional default probability {p}: {e}")))?
                .sample(rng)
        };
        Ok(self.ead_lgd * (defaults as f64 / self.count as f64))
    }
}

fn path_loss<R: Rng>(groups: &[Group], y: &DVector<f64>, sign: f64, rng: &mut R) -> Result<f64> {
    let mut total = 0.0;
    for g in groups {
        total += g.loss(sign * y[g.factor], rng)?;
    }
    Ok(total)
}

/// Simulate the aggregate portfolio loss under factor correlation `s`.
///
/// Paths run in parallel over fixed-size blocks, each with its own seeded
/// substream, so the sorted output is reproducible for a given seed.
pub fn simulate_losses(portfolio: &PortfolioSpec, s: &CorrelationMatrix, cfg: &SimConfig) -> Result<LossDistribution> {
    INVOCATIONS.fetch_add(1, Ordering::SeqCst);
    cfg.validate()?;
    let k = s.dim();
    portfolio.validate(Some(k))?;
    let alpha: DMatrix<f64> = spectral_root(s)?.alpha;
    let groups = portfolio
        .sub_portfolios
        .iter()
        .map(|sp| {
            Ok(Group {
                threshold: if sp.pd == 0.0 { f64::NEG_INFINITY } else { normal_inv_cdf(sp.pd)? },
                rho: sp.rho,
                idio: (1.0 - sp.rho * sp.rho).sqrt(),
                factor: sp.factor,
                count: sp.counterparties,
                ead_lgd: sp.ead * sp.lgd,
                full: cfg.full_simulation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sampler = StratifiedSampler::new(cfg.strata, k)?;
    let draws = if cfg.antithetic { cfg.paths / 2 } else { cfg.paths };
    let per_draw = if cfg.antithetic { 2 } else { 1 };
    let blocks = draws.div_ceil(BLOCK);

    let chunks = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::block_stream(cfg.seed, "credit-paths", b as u64);
            let start = b * BLOCK;
            let end = (start + BLOCK).min(draws);
            let mut z = vec![0.0; k];
            let mut out = Vec::with_capacity((end - start) * per_draw);
            for index in start..end {
                sampler.fill(index, &mut rng, &mut z);
                let y = &alpha * DVector::from_column_slice(&z);
                out.push(path_loss(&groups, &y, 1.0, &mut rng)?);
                if cfg.antithetic {
                    out.push(path_loss(&groups, &y, -1.0, &mut rng)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    LossDistribution::equally_weighted(chunks.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::creditrisk::{var_quantile, vasicek_closed_form, VarReport};
    use nalgebra::DMatrix;

    fn identity(k: usize) -> CorrelationMatrix {
        CorrelationMatrix::unlabeled(DMatrix::identity(k, k)).unwrap()
    }

    fn cfg(paths: usize, strata: usize, seed: u64) -> SimConfig {
        SimConfig {
            paths,
            strata,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_pd_gives_zero_losses() {
        let p = PortfolioSpec::homogeneous(100, 0.0, 0.3, 0.5, 10.0);
        let d = simulate_losses(&p, &identity(1), &cfg(5000, 10, 1)).unwrap();
        assert!(d.losses().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn idiosyncratic_default_frequency() {
        for full in [false, true] {
            let p = PortfolioSpec::homogeneous(1, 0.1, 0.0, 1.0, 1.0);
            let c = SimConfig {
                full_simulation: full,
                ..cfg(40_000, 1, 2)
            };
            let d = simulate_losses(&p, &identity(1), &c).unwrap();
            let freq = d.mean();
            let se = (0.1 * 0.9 / 40_000f64).sqrt();
            assert!((freq - 0.1).abs() < 3.0 * se, "{freq}");
        }
    }

    #[test]
    fn losses_bounded_and_reproducible() {
        let p = PortfolioSpec {
            sub_portfolios: (0..3)
                .map(|j| super::super::SubPortfolio {
                    name: format!("g{j}"),
                    ead: 10.0 + j as f64,
                    pd: 0.05,
                    lgd: 0.6,
                    rho: 0.5,
                    factor: j,
                    counterparties: 7,
                })
                .collect(),
        };
        let s = CorrelationMatrix::unlabeled(DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.4 })).unwrap();
        let c = SimConfig {
            antithetic: true,
            ..cfg(10_000, 100, 3)
        };
        let a = simulate_losses(&p, &s, &c).unwrap();
        assert!(a.losses().iter().all(|&l| (0.0..=p.max_loss()).contains(&l)));
        assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let b = simulate_losses(&p, &s, &c).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| simulate_losses(&p, &s, &c)).unwrap();
        assert_eq!(a, single);
    }

    #[test]
    fn var_monotone_in_quantile() {
        let p = PortfolioSpec::homogeneous(500, 0.02, 0.4, 1.0, 1.0);
        let d = simulate_losses(&p, &identity(1), &cfg(20_000, 100, 4)).unwrap();
        let mut prev = 0.0;
        for q in [0.0, 0.1, 0.5, 0.9, 0.99, 0.999, 1.0] {
            let v = var_quantile(&d, q).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn homogeneous_matches_closed_form() {
        let p = PortfolioSpec::homogeneous(10_000, 0.01, 0.2, 1.0, 1.0);
        let c = cfg(100_000, 1000, 5);
        let d = simulate_losses(&p, &identity(1), &c).unwrap();
        let rep = VarReport::new(&d, &p, &c).unwrap();
        let oracle = vasicek_closed_form(0.01, 0.2, 0.999, 1.0, 1.0).unwrap();
        let tol = (3.0 * rep.standard_error).max(p.sub_portfolios[0].obligor_loss());
        assert!((rep.var - oracle).abs() <= tol, "{} vs {oracle} (tol {tol})", rep.var);
    }

    #[test]
    fn higher_factor_correlation_raises_var() {
        let k = 5;
        let p = PortfolioSpec {
            sub_portfolios: (0..k)
                .map(|j| super::super::SubPortfolio {
                    name: String::new(),
                    ead: 1.0,
                    pd: 0.01,
                    lgd: 1.0,
                    rho: 0.5,
                    factor: j,
                    counterparties: 200,
                })
                .collect(),
        };
        let high = CorrelationMatrix::unlabeled(DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.8 })).unwrap();
        let c = cfg(50_000, 500, 6);
        let lo = var_quantile(&simulate_losses(&p, &identity(k), &c).unwrap(), 0.999).unwrap();
        let hi = var_quantile(&simulate_losses(&p, &high, &c).unwrap(), 0.999).unwrap();
        assert!(hi > lo, "{hi} <= {lo}");
    }

    #[test]
    fn stratified_and_plain_means_agree() {
        let p = PortfolioSpec::homogeneous(1000, 0.02, 0.4, 1.0, 1.0);
        let a = simulate_losses(&p, &identity(1), &cfg(40_000, 1000, 7)).unwrap();
        let b = simulate_losses(&p, &identity(1), &cfg(40_000, 1, 8)).unwrap();
        let se = a.mean_standard_error().hypot(b.mean_standard_error());
        assert!((a.mean() - b.mean()).abs() < 3.0 * se);
        assert!((b.mean() - 0.02).abs() < 3.0 * b.mean_standard_error());
    }

    #[test]
    fn non_psd_matrix_rejected() {
        let raw = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.9, 0.9, 1.0, -0.9, 0.9, -0.9, 1.0]);
        let err = CorrelationMatrix::unlabeled(raw).unwrap_err();
        assert!(matches!(err, Error::NotPsd(_)));
        assert_eq!(err.kind(), crate::error::ErrorKind::Numerical);
        assert!(err.to_string().contains("repair"));
    }

    #[test]
    fn sampler_one_stratum_per_draw() {
        let n = 5000;
        let s = StratifiedSampler::new(n, 1).unwrap();
        let mut r = rng::substream(9, "sampler");
        let mut u: Vec<f64> = (0..n)
            .map(|i| {
                let mut z = [0.0];
                s.fill(i, &mut r, &mut z);
                normal_cdf(z[0])
            })
            .collect();
        u.sort_by(f64::total_cmp);
        let ks = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).abs().max((x - i as f64 / n as f64).abs()))
            .fold(0.0, f64::max);
        assert!(ks <= 1.0 / n as f64 + 1e-12, "{ks}");
    }

    #[test]
    fn stratified_cycle_mean_near_zero() {
        let n = 10_000;
        let s = StratifiedSampler::new(n, 3).unwrap();
        let mut r = rng::substream(10, "sampler");
        let mut z = [0.0; 3];
        let mean = (0..n)
            .map(|i| {
                s.fill(i, &mut r, &mut z);
                z[0]
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 1e-3, "{mean}");
    }
}
