use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{kl_from_logvar, to_columns, AeModel, Autoencoder, DatasetSplit, LinearModel, VaeModel};
use crate::error::{Error, Result};
use crate::neural::{adam_step, Activation, AdamState, Mlp, MlpParams, MlpSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// Bottleneck width for the linear autoencoder.
    pub latent_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            learning_rate: 1e-4,
            beta: 1.0,
            batch_size: 16,
            seed: 0,
            hidden: vec![512, 250],
            hidden_activation: Activation::Relu,
            latent_dim: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over matrices of the per-entry squared error.
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
    /// Mean KL per matrix; zero for deterministic models.
    pub train_kl: f64,
    pub validation_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub seed: u64,
}

impl TrainReport {
    pub fn final_epoch(&self) -> &EpochStats {
        self.epochs.last().expect("report has at least one epoch")
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("epoch,train_mse,validation_mse,train_kl,validation_kl\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.train_mse,
                opt(e.validation_mse),
                e.train_kl,
                opt(e.validation_kl)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Flavour {
    Variational { beta: f64 },
    Deterministic,
    Linear { latent_dim: usize },
}

impl Flavour {
    fn latent_dim(self) -> usize {
        match self {
            Flavour::Variational { .. } | Flavour::Deterministic => 2,
            Flavour::Linear { latent_dim } => latent_dim,
        }
    }

    fn encoder_outputs(self) -> usize {
        match self {
            Flavour::Variational { .. } => 4,
            _ => self.latent_dim(),
        }
    }
}

struct Fitted {
    encoder: Mlp,
    decoder: Mlp,
    report: TrainReport,
}

fn validate(split: &DatasetSplit, cfg: &TrainConfig) -> Result<usize> {
    let d = split
        .train
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::invalid("training set is empty"))?;
    if split.train.iter().chain(&split.validation).any(|v| v.len() != d) {
        return Err(Error::Shape("training vectors have differing lengths".into()));
    }
    let m = (d as f64).sqrt().round() as usize;
    if m * m != d {
        return Err(Error::Shape(format!("input length {d} is not a square matrix size")));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if !(cfg.beta >= 0.0 && cfg.beta.is_finite()) {
        return Err(Error::invalid("beta must be non-negative"));
    }
    Ok(d)
}

fn build(flavour: Flavour, d: usize, cfg: &TrainConfig) -> Result<(Mlp, Mlp)> {
    let mut init = rng::substream(cfg.seed, "autoencoder-init");
    let latent = flavour.latent_dim();
    let (enc_sizes, dec_sizes, hidden_act) = match flavour {
        Flavour::Linear { .. } => (vec![d, latent], vec![latent, d], Activation::Linear),
        _ => {
            let mut e = vec![d];
            e.extend(&cfg.hidden);
            e.push(flavour.encoder_outputs());
            let mut dd = vec![latent];
            dd.extend(cfg.hidden.iter().rev());
            dd.push(d);
            (e, dd, cfg.hidden_activation)
        }
    };
    let encoder = Mlp::init(MlpSpec::new(enc_sizes, hidden_act, Activation::Linear)?, &mut init)?;
    let decoder = Mlp::init(MlpSpec::new(dec_sizes, hidden_act, Activation::Linear)?, &mut init)?;
    Ok((encoder, decoder))
}

/// (mean per-entry MSE, mean KL) over a data set, using latent means.
fn evaluate(flavour: Flavour, encoder: &Mlp, decoder: &Mlp, x: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = x.ncols() as f64;
    let h = encoder.predict(x)?;
    let latent = flavour.latent_dim();
    let z = h.rows(0, latent).into_owned();
    let r = decoder.predict(&z)?;
    let mse = (&r - x).norm_squared() / (x.nrows() as f64 * n);
    let kl = match flavour {
        Flavour::Variational { .. } => {
            (0..x.ncols())
                .map(|j| kl_from_logvar(&[h[(0, j)], h[(1, j)]], &[h[(2, j)], h[(3, j)]]))
                .sum::<f64>()
                / n
        }
        _ => 0.0,
    };
    Ok((mse, kl))
}

/// Batch objective and its parameter gradients.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    /// `(1/B) Σ ‖x - x̂‖² + beta KL`
    pub loss: f64,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
}

/// Loss and gradients for one batch (columns of `x`).
///
/// With `noise` (2 x B standard normals) the encoder output is read as
/// `(mu1, mu2, log sigma1², log sigma2²)` and the code is `mu + sigma * noise`;
/// without it the encoder output is the code itself and `beta` is ignored.
pub fn batch_gradients(encoder: &Mlp, decoder: &Mlp, x: &DMatrix<f64>, noise: Option<&DMatrix<f64>>, beta: f64) -> Result<BatchGradients> {
    let b = x.ncols();
    let scale = 1.0 / b as f64;
    let (h, enc_tape) = encoder.forward_batch(x)?;
    let z = match noise {
        Some(eps) => {
            if h.nrows() != 4 || eps.shape() != (2, b) {
                return Err(Error::Shape("variational batch needs 4 encoder outputs and 2 x B noise".into()));
            }
            let sigma = h.rows(2, 2).map(|lv| (0.5 * lv).exp());
            h.rows(0, 2) + sigma.component_mul(eps)
        }
        None => h.clone(),
    };
    let (r, dec_tape) = decoder.forward_batch(&z)?;
    let resid = &r - x;
    let mut loss = resid.norm_squared();
    let dec_grads = decoder.backward(&dec_tape, &(&resid * (2.0 * scale)))?;
    let gz = dec_grads.input;
    let enc_out_grad = match noise {
        Some(eps) => {
            let mut g = DMatrix::zeros(4, b);
            for j in 0..b {
                let mu = [h[(0, j)], h[(1, j)]];
                let lv = [h[(2, j)], h[(3, j)]];
                loss += beta * kl_from_logvar(&mu, &lv);
                for k in 0..2 {
                    let sigma = (0.5 * lv[k]).exp();
                    g[(k, j)] = gz[(k, j)] + beta * scale * mu[k];
                    g[(k + 2, j)] = gz[(k, j)] * eps[(k, j)] * 0.5 * sigma + beta * scale * 0.5 * (lv[k].exp() - 1.0);
                }
            }
            g
        }
        None => gz,
    };
    let enc_grads = encoder.backward(&enc_tape, &enc_out_grad)?;
    Ok(BatchGradients {
        loss: loss * scale,
        encoder: enc_grads.params,
        decoder: dec_grads.params,
    })
}

fn fit(flavour: Flavour, split: &DatasetSplit, cfg: &TrainConfig) -> Result<Fitted> {
    let d = validate(split, cfg)?;
    let (mut encoder, mut decoder) = build(flavour, d, cfg)?;
    let mut enc_opt = AdamState::new(encoder.params(), cfg.learning_rate);
    let mut dec_opt = AdamState::new(decoder.params(), cfg.learning_rate);
    let mut shuffle_rng = rng::substream(cfg.seed, "autoencoder-shuffle");
    let mut noise_rng = rng::substream(cfg.seed, "autoencoder-noise");

    let train_x = to_columns(&split.train);
    let val_x = (!split.validation.is_empty()).then(|| to_columns(&split.validation));
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let x = DMatrix::from_fn(d, b, |i, j| train_x[(i, chunk[j])]);
            let noise = matches!(flavour, Flavour::Variational { .. })
                .then(|| DMatrix::from_fn(2, b, |_, _| StandardNormal.sample(&mut noise_rng)));
            let beta = match flavour {
                Flavour::Variational { beta } => beta,
                _ => 0.0,
            };
            let g = batch_gradients(&encoder, &decoder, &x, noise.as_ref(), beta)?;
            if !g.loss.is_finite() {
                return Err(Error::Divergence { epoch, loss: g.loss });
            }
            adam_step(&mut decoder, &g.decoder, &mut dec_opt)?;
            adam_step(&mut encoder, &g.encoder, &mut enc_opt)?;
        }

        let (train_mse, train_kl) =
            evaluate(flavour, &encoder, &decoder, &train_x).map_err(|_| Error::Divergence { epoch, loss: f64::NAN })?;
        let val = match &val_x {
            Some(v) => Some(evaluate(flavour, &encoder, &decoder, v).map_err(|_| Error::Divergence { epoch, loss: f64::NAN })?),
            None => None,
        };
        if !train_mse.is_finite() || !train_kl.is_finite() {
            return Err(Error::Divergence { epoch, loss: train_mse });
        }
        epochs.push(EpochStats {
            epoch,
            train_mse,
            validation_mse: val.map(|v| v.0),
            train_kl,
            validation_kl: val.map(|v| v.1),
        });
    }

    Ok(Fitted {
        encoder,
        decoder,
        report: TrainReport {
            epochs,
            train_indices: split.train_indices.clone(),
            validation_indices: split.validation_indices.clone(),
            seed: cfg.seed,
        },
    })
}

/// Train a VAE with one reparameterized sample `z = mu + sigma * eps` per input and step.
pub fn train_vae(split: &DatasetSplit, cfg: &TrainConfig) -> Result<(VaeModel, TrainReport)> {
    let f = fit(Flavour::Variational { beta: cfg.beta }, split, cfg)?;
    Ok((
        VaeModel {
            encoder: f.encoder,
            decoder: f.decoder,
            beta: cfg.beta,
        },
        f.report,
    ))
}

pub fn train_ae(split: &DatasetSplit, cfg: &TrainConfig) -> Result<(AeModel, TrainReport)> {
    let f = fit(Flavour::Deterministic, split, cfg)?;
    Ok((
        AeModel {
            encoder: f.encoder,
            decoder: f.decoder,
        },
        f.report,
    ))
}

/// Linear autoencoder with a bottleneck of `cfg.latent_dim` (2 or 3).
pub fn train_linear_ae(split: &DatasetSplit, cfg: &TrainConfig) -> Result<(LinearModel, TrainReport)> {
    if !(2..=3).contains(&cfg.latent_dim) {
        return Err(Error::invalid(format!(
            "linear latent dimension must be 2 or 3, got {}",
            cfg.latent_dim
        )));
    }
    let f = fit(
        Flavour::Linear {
            latent_dim: cfg.latent_dim,
        },
        split,
        cfg,
    )?;
    let model = LinearModel {
        encoder: f.encoder,
        decoder: f.decoder,
    };
    debug_assert_eq!(model.latent_dim(), cfg.latent_dim);
    Ok((model, f.report))
}
