use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::eigh_symmetric;

const EIGEN_FLOOR: f64 = 1e-12;

/// Per-entry mean squared error of the best rank-`k` affine reconstruction
/// of `data`, from the eigenvalues of its sample covariance.
///
/// `k = 0` gives the mean squared deviation about the mean. When there are
/// fewer samples than dimensions the (equivalent) Gram matrix is used.
pub fn pca_oracle(data: &[DVector<f64>], k: usize) -> Result<f64> {
    let n = data.len();
    let d = data.first().map(|v| v.len()).ok_or_else(|| Error::invalid("empty data set"))?;
    if data.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("vectors differ in length".into()));
    }
    if k > d {
        return Err(Error::invalid(format!("rank {k} exceeds dimension {d}")));
    }
    let mean = data.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;
    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let total: f64 = centered.norm_squared() / n as f64;
    if k == 0 {
        return Ok(total / d as f64);
    }
    if k >= n.min(d) {
        return Ok(0.0);
    }
    let gram = if n <= d {
        &centered * centered.transpose() / n as f64
    } else {
        centered.transpose() * &centered / n as f64
    };
    let eig = eigh_symmetric(&gram)?;
    let kept: f64 = eig.eigenvalues.iter().take(k).map(|&l| if l > EIGEN_FLOOR { l } else { 0.0 }).sum();
    Ok(((total - kept) / d as f64).max(0.0))
}
