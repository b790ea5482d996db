//! Model bundle directory: `encoder.bin`, `decoder.bin`, `meta.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AeModel, LinearModel, VaeModel};
use crate::error::{Error, Result};
use crate::fsio::{read_json, write_json};
use crate::neural::{load_weights, save_weights, Mlp, MlpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vae,
    Ae,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub beta: f64,
    pub matrix_dim: usize,
    pub labels: Vec<String>,
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
    pub seed: u64,
    /// Hash of the training data manifest, for provenance.
    pub data_hash: String,
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Vae(VaeModel),
    Ae(AeModel),
    Linear(LinearModel),
}

impl TrainedModel {
    fn parts(&self) -> (&Mlp, &Mlp) {
        match self {
            TrainedModel::Vae(m) => (&m.encoder, &m.decoder),
            TrainedModel::Ae(m) => (&m.encoder, &m.decoder),
            TrainedModel::Linear(m) => (&m.encoder, &m.decoder),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Vae(_) => ModelKind::Vae,
            TrainedModel::Ae(_) => ModelKind::Ae,
            TrainedModel::Linear(_) => ModelKind::Linear,
        }
    }
}

pub fn save_model(dir: &Path, model: &TrainedModel, labels: &[String], seed: u64, data_hash: &str) -> Result<()> {
    let (enc, dec) = model.parts();
    let beta = match model {
        TrainedModel::Vae(m) => m.beta,
        _ => 0.0,
    };
    save_weights(enc, &dir.join("encoder.bin"))?;
    save_weights(dec, &dir.join("decoder.bin"))?;
    let meta = ModelMeta {
        kind: model.kind(),
        beta,
        matrix_dim: labels.len(),
        labels: labels.to_vec(),
        encoder: enc.spec().clone(),
        decoder: dec.spec().clone(),
        seed,
        data_hash: data_hash.to_string(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn load_model(dir: &Path) -> Result<(TrainedModel, ModelMeta)> {
    let meta: ModelMeta = read_json(&dir.join("meta.json"))?;
    let encoder = load_weights(&dir.join("encoder.bin"))?;
    let decoder = load_weights(&dir.join("decoder.bin"))?;
    if encoder.spec() != &meta.encoder || decoder.spec() != &meta.decoder {
        return Err(Error::CorruptWeights("weight headers disagree with meta.json".into()));
    }
    let d = meta.matrix_dim * meta.matrix_dim;
    if encoder.spec().input_size() != d || decoder.spec().output_size() != d {
        return Err(Error::Shape(format!("bundle does not map {0}x{0} matrices", meta.matrix_dim)));
    }
    let model = match meta.kind {
        ModelKind::Vae => {
            if encoder.spec().output_size() != 4 || decoder.spec().input_size() != 2 {
                return Err(Error::Shape("VAE bundle needs a 4-output encoder and 2-input decoder".into()));
            }
            TrainedModel::Vae(VaeModel {
                encoder,
                decoder,
                beta: meta.beta,
            })
        }
        ModelKind::Ae => TrainedModel::Ae(AeModel { encoder, decoder }),
        ModelKind::Linear => TrainedModel::Linear(LinearModel { encoder, decoder }),
    };
    Ok((model, meta))
}
