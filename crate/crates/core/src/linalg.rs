//! Symmetric eigensolver, spectral factor roots and correlation repair.

use nalgebra::{DMatrix, DVector};

use crate::corrdata::CorrelationMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-6;
const REPAIR_ITERS: usize = 50;
const REPAIR_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Column `k` of `eigenvectors` belongs to `eigenvalues[k]`, and its
/// largest-magnitude component is positive (first index wins ties).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let scaled = q * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * q.transpose()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Loadings of uncorrelated drivers: `alpha * alpha^T` reproduces the matrix.
#[derive(Debug, Clone)]
pub struct FactorRoot {
    pub alpha: DMatrix<f64>,
}

pub(crate) fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Flip each eigenvector so its largest-magnitude component is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi eigen-decomposition with a threshold strategy.
pub fn eigh_symmetric(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("eigh needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigh input".into()));
    }
    let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    // Row-major working copies.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * frob;
    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[i * n + j] * m[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    // Once the tolerance is met, one more sweep: convergence is quadratic,
    // so it removes what is left of the off-diagonal mass.
    let mut converged = false;
    let mut polished = false;
    for sweep in 0..MAX_SWEEPS {
        let off = off_norm(&m);
        if off <= tol {
            converged = true;
            if polished || off == 0.0 {
                break;
            }
            polished = true;
        }
        let thresh = if sweep < 3 {
            let sum_abs: f64 = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| m[i * n + j].abs())
                .sum();
            0.2 * sum_abs / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh || apq == 0.0 {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_norm(&m) > tol {
        return Err(Error::NonConvergence(off_norm(&m)));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| m[i * n + i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            col[k] = v[k * n + src];
        }
        canonical_sign(&mut col);
        for k in 0..n {
            eigenvectors[(k, dst)] = col[k];
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Spectral root `alpha = Q diag(sqrt(max(λ, 0)))` of a correlation matrix.
pub fn spectral_root(s: &CorrelationMatrix) -> Result<FactorRoot> {
    spectral_root_of(s.entries())
}

pub(crate) fn spectral_root_of(s: &DMatrix<f64>) -> Result<FactorRoot> {
    let eig = eigh_symmetric(s)?;
    let min = eig.min_eigenvalue();
    if min < -PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let alpha = eig.eigenvectors * DMatrix::from_diagonal(&roots);
    Ok(FactorRoot { alpha })
}

/// Project an arbitrary square matrix onto a valid correlation matrix.
///
/// Alternates symmetrization, entry clipping, eigenvalue clipping at zero
/// and unit-diagonal rescaling until successive iterates move less than
/// 1e-10 (at most 50 rounds).
pub fn repair_to_correlation(a: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let repaired = repair_entries(a)?;
    CorrelationMatrix::unlabeled(repaired)
}

pub(crate) fn repair_entries(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("repair needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix to repair".into()));
    }
    let mut x = a.clone();
    for _ in 0..REPAIR_ITERS {
        let prev = x.clone();

        let mut y = (&x + x.transpose()) * 0.5;
        y.apply(|v| *v = v.clamp(-1.0, 1.0));

        let eig = eigh_symmetric(&y)?;
        if eig.min_eigenvalue() < 0.0 {
            let clipped = EigenDecomposition {
                eigenvalues: eig.eigenvalues.map(|l| l.max(0.0)),
                eigenvectors: eig.eigenvectors,
            };
            let r = clipped.reconstruct();
            y = (&r + r.transpose()) * 0.5;
        }

        let d: Vec<f64> = (0..n).map(|i| y[(i, i)]).collect();
        for i in 0..n {
            for j in 0..n {
                y[(i, j)] = if i == j {
                    1.0
                } else if d[i] <= f64::MIN_POSITIVE || d[j] <= f64::MIN_POSITIVE {
                    0.0
                } else {
                    (y[(i, j)] / (d[i].sqrt() * d[j].sqrt())).clamp(-1.0, 1.0)
                };
            }
        }
        // exact symmetry
        for i in 0..n {
            for j in (i + 1)..n {
                y[(j, i)] = y[(i, j)];
            }
        }

        let change = (&y - &prev).amax();
        x = y;
        if change < REPAIR_TOL {
            break;
        }
    }
    Ok(x)
}
