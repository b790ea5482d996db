//! Variational, deterministic and linear autoencoders over flattened
//! correlation matrices, plus the PCA reconstruction oracle.

mod bundle;
mod pca;
mod train;

pub use bundle::{load_model, save_model, ModelKind, ModelMeta, TrainedModel};
pub use pca::pca_oracle;
pub use train::{batch_gradients, train_ae, train_linear_ae, train_vae, BatchGradients, EpochStats, TrainConfig, TrainReport};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corrdata::{flatten_row_major, unflatten_square, CorrelationMatrix, MatrixPanel};
use crate::error::{Error, Result};
use crate::neural::Mlp;
use crate::rng;

/// Posterior mean and standard deviation of one sample in the 2-D latent plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentEncoding {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

/// Loss terms for one sample: `total = mse + beta * kl`.
///
/// `mse` is the squared reconstruction error summed over all M² entries,
/// the per-sample term of the training objective. Reports use
/// [`mean_squared_error`] (mean over entries) instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

/// KL divergence of `N(mu, diag(sigma²))` from the standard normal.
pub fn kl_divergence(mu: &[f64], sigma: &[f64]) -> f64 {
    -0.5 * mu.iter().zip(sigma).map(|(m, s)| 1.0 + (s * s).ln() - m * m - s * s).sum::<f64>()
}

/// KL divergence written in terms of log-variances, as the encoder emits them.
pub(crate) fn kl_from_logvar(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu.iter().zip(logvar).map(|(m, lv)| 1.0 + lv - m * m - lv.exp()).sum::<f64>()
}

pub fn vae_loss(x: &DVector<f64>, reconstruction: &DVector<f64>, enc: &LatentEncoding, beta: f64) -> Result<VaeLoss> {
    if x.len() != reconstruction.len() {
        return Err(Error::Shape(format!(
            "{} inputs vs {} reconstructed",
            x.len(),
            reconstruction.len()
        )));
    }
    let finite = x
        .iter()
        .chain(reconstruction.iter())
        .chain(&enc.mu)
        .chain(&enc.sigma)
        .all(|v| v.is_finite());
    if !finite || !beta.is_finite() {
        return Err(Error::NonFinite("loss inputs".into()));
    }
    if enc.sigma.iter().any(|s| *s <= 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let mse = (x - reconstruction).norm_squared();
    let kl = kl_divergence(&enc.mu, &enc.sigma);
    Ok(VaeLoss {
        total: mse + beta * kl,
        mse,
        kl,
    })
}

/// Mean over entries of the squared error, the per-matrix figure used in reports.
pub fn mean_squared_error(x: &DVector<f64>, reconstruction: &DVector<f64>) -> f64 {
    (x - reconstruction).norm_squared() / x.len() as f64
}

/// Disjoint train/validation split of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub train: Vec<DVector<f64>>,
    pub validation: Vec<DVector<f64>>,
}

impl DatasetSplit {
    /// Everything in the training set, nothing held out.
    pub fn all_train(data: Vec<DVector<f64>>) -> Self {
        Self {
            train_indices: (0..data.len()).collect(),
            validation_indices: Vec::new(),
            train: data,
            validation: Vec::new(),
        }
    }
}

/// Sizes of a split: the training count is `floor(n * (1 - val_fraction))`,
/// clamped so both sides are nonempty.
pub fn split_sizes(n: usize, val_fraction: f64) -> (usize, usize) {
    let train = ((n as f64) * (1.0 - val_fraction) + 1e-9).floor() as usize;
    let train = train.clamp(1, n - 1);
    (train, n - train)
}

pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} matrices")));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!("validation fraction {val_fraction} outside (0, 1)")));
    }
    let (n_train, _) = split_sizes(n, val_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, "dataset-split"));
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split_dataset(panel: &MatrixPanel, val_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    let (train_indices, validation_indices) = split_indices(panel.len(), val_fraction, seed)?;
    let flat = panel.flattened();
    Ok(DatasetSplit {
        train: train_indices.iter().map(|&i| flat[i].clone()).collect(),
        validation: validation_indices.iter().map(|&i| flat[i].clone()).collect(),
        train_indices,
        validation_indices,
    })
}

pub(crate) fn to_columns(data: &[DVector<f64>]) -> DMatrix<f64> {
    let d = data.first().map_or(0, |v| v.len());
    DMatrix::from_fn(d, data.len(), |i, j| data[j][i])
}

/// Common surface of the three autoencoder flavours.
pub trait Autoencoder {
    fn encoder(&self) -> &Mlp;
    fn decoder(&self) -> &Mlp;
    fn latent_dim(&self) -> usize;

    /// Deterministic latent code for a batch of flattened inputs (columns).
    fn latent_means(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let out = self.encoder().predict(x)?;
        Ok(out.rows(0, self.latent_dim()).into_owned())
    }

    /// Reconstruction through the latent means.
    fn reconstruct_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.latent_means(x)?;
        self.decoder().predict(&z)
    }

    fn matrix_dim(&self) -> usize {
        (self.decoder().spec().output_size() as f64).sqrt().round() as usize
    }

    /// Per-matrix mean squared error over all M² entries.
    fn reconstruction_errors(&self, data: &[DVector<f64>]) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        let x = to_columns(data);
        let r = self.reconstruct_batch(&x)?;
        Ok((0..data.len())
            .map(|j| (x.column(j) - r.column(j)).norm_squared() / x.nrows() as f64)
            .collect())
    }

    /// Raw decoder output at `z`, reshaped to a square matrix.
    fn decode_point(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent point has {} coordinates, expected {}",
                z.len(),
                self.latent_dim()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent point".into()));
        }
        let (out, _) = self.decoder().forward(&DVector::from_row_slice(z))?;
        unflatten_square(&out)
    }
}

/// VAE: the encoder emits `(mu1, mu2, log sigma1², log sigma2²)`.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub beta: f64,
}

/// Deterministic autoencoder with a width-2 bottleneck.
#[derive(Debug, Clone)]
pub struct AeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Autoencoder without activations.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

macro_rules! impl_autoencoder {
    ($t:ty, $dim:expr) => {
        impl Autoencoder for $t {
            fn encoder(&self) -> &Mlp {
                &self.encoder
            }
            fn decoder(&self) -> &Mlp {
                &self.decoder
            }
            fn latent_dim(&self) -> usize {
                $dim(self)
            }
        }
    };
}

impl_autoencoder!(VaeModel, |_: &VaeModel| 2);
impl_autoencoder!(AeModel, |_: &AeModel| 2);
impl_autoencoder!(LinearModel, |m: &LinearModel| m.decoder.spec().input_size());

fn check_input(model: &impl Autoencoder, m: &CorrelationMatrix) -> Result<DVector<f64>> {
    if m.dim() != model.matrix_dim() {
        return Err(Error::Shape(format!(
            "model expects {0}x{0} matrices, got {1}x{1}",
            model.matrix_dim(),
            m.dim()
        )));
    }
    Ok(m.flatten())
}

impl VaeModel {
    /// Posterior parameters of a matrix; no sampling.
    pub fn encode(&self, matrix: &CorrelationMatrix) -> Result<LatentEncoding> {
        let x = check_input(self, matrix)?;
        let (h, _) = self.encoder.forward(&x)?;
        Ok(LatentEncoding {
            mu: [h[0], h[1]],
            sigma: [(0.5 * h[2]).exp(), (0.5 * h[3]).exp()],
        })
    }

    pub fn encode_panel(&self, panel: &MatrixPanel) -> Result<Vec<LatentEncoding>> {
        panel.matrices.iter().map(|m| self.encode(m)).collect()
    }

    /// Raw decoder output; pass it through `repair_to_correlation` before use.
    pub fn decode(&self, z: [f64; 2]) -> Result<DMatrix<f64>> {
        self.decode_point(&z)
    }
}

impl AeModel {
    pub fn encode(&self, matrix: &CorrelationMatrix) -> Result<[f64; 2]> {
        let x = check_input(self, matrix)?;
        let (h, _) = self.encoder.forward(&x)?;
        Ok([h[0], h[1]])
    }

    pub fn decode(&self, z: [f64; 2]) -> Result<DMatrix<f64>> {
        self.decode_point(&z)
    }
}

impl LinearModel {
    pub fn encode(&self, matrix: &CorrelationMatrix) -> Result<Vec<f64>> {
        let x = check_input(self, matrix)?;
        Ok(self.encoder.forward(&x)?.0.iter().copied().collect())
    }
}

/// Flattened copy of a raw square matrix, for feeding decoded output back in.
pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    flatten_row_major(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_vanishes_at_the_prior() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[1.0, 1.0]) - 0.5).abs() < 1e-15);
        assert!((kl_from_logvar(&[1.0, 0.0], &[0.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_direct_formula() {
        // hand evaluation: x-r = (0.1, -0.2, 0.3) -> 0.01 + 0.04 + 0.09 = 0.14
        // kl = -0.5 * [(1 + ln 0.25 - 0.25 - 0.25) + (1 + ln 4 - 1 - 4)]
        let x = DVector::from_vec(vec![1.0, 0.5, -0.2]);
        let r = DVector::from_vec(vec![0.9, 0.7, -0.5]);
        let enc = LatentEncoding {
            mu: [0.5, -1.0],
            sigma: [0.5, 2.0],
        };
        let l = vae_loss(&x, &r, &enc, 0.7).unwrap();
        let kl = -0.5 * ((1.0 + 0.25f64.ln() - 0.25 - 0.25) + (1.0 + 4.0f64.ln() - 1.0 - 4.0));
        assert!((l.mse - 0.14).abs() < 1e-15);
        assert!((l.kl - kl).abs() < 1e-15);
        assert!((l.total - (0.14 + 0.7 * kl)).abs() < 1e-15);
    }

    #[test]
    fn loss_with_zero_beta_is_reconstruction_only() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let r = DVector::from_vec(vec![0.5, 0.5]);
        let enc = LatentEncoding {
            mu: [3.0, 1.0],
            sigma: [0.1, 4.0],
        };
        let l = vae_loss(&x, &r, &enc, 0.0).unwrap();
        assert_eq!(l.total, l.mse);
    }

    #[test]
    fn loss_rejects_bad_inputs() {
        let enc = LatentEncoding {
            mu: [0.0; 2],
            sigma: [1.0; 2],
        };
        let x = DVector::from_vec(vec![1.0, f64::NAN]);
        assert!(vae_loss(&x, &DVector::zeros(2), &enc, 1.0).is_err());
        assert!(vae_loss(&DVector::zeros(3), &DVector::zeros(2), &enc, 1.0).is_err());
    }

    #[test]
    fn default_split_sizes() {
        assert_eq!(split_sizes(206, 0.30), (144, 62));
        assert_eq!(split_sizes(4, 0.5), (2, 2));
        let (a, b) = split_indices(206, 0.3, 7).unwrap();
        assert_eq!((a.len(), b.len()), (144, 62));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..206).collect::<Vec<_>>());
        assert_eq!(split_indices(206, 0.3, 7).unwrap(), (a, b));
        assert!(split_indices(1, 0.3, 7).is_err());
        assert!(split_indices(10, 1.0, 7).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kl_is_nonnegative(m1 in -5.0..5.0f64, m2 in -5.0..5.0f64, s1 in 0.01..10.0f64, s2 in 0.01..10.0f64) {
                let kl = kl_divergence(&[m1, m2], &[s1, s2]);
                prop_assert!(kl >= -1e-12);
                let far = m1.abs() + m2.abs() + (s1 - 1.0).abs() + (s2 - 1.0).abs();
                if far > 1e-3 {
                    prop_assert!(kl > 1e-10);
                }
            }
        }
    }
}
