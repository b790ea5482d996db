//! A small dense-network engine: batched forward passes, exact reverse-mode
//! gradients, Adam, and a self-describing weight file.

mod adam;
mod weights;

pub use adam::{adam_step, AdamState};
pub use weights::{load_weights, save_weights, weights_from_bytes, weights_to_bytes};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
            Activation::Tanh => z.apply(|v| *v = v.tanh()),
        }
    }

    /// Multiply `delta` in place by the derivative, expressed through the layer output.
    fn backprop(self, output: &DMatrix<f64>, delta: &mut DMatrix<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => delta.zip_apply(output, |d, a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => delta.zip_apply(output, |d, a| *d *= 1.0 - a * a),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Layer widths from input to output plus the activations between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden_activation: Activation, output_activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output layer"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.depth() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Weights and biases of every layer. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Layer {
                weight: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape() && a.bias.len() == b.bias.len())
    }

    pub fn matches_spec(&self, spec: &MlpSpec) -> bool {
        self.layers.len() == spec.depth()
            && self
                .layers
                .iter()
                .zip(spec.layer_sizes.windows(2))
                .all(|(l, w)| l.weight.shape() == (w[1], w[0]) && l.bias.len() == w[1])
    }

    /// Parameter blocks in a fixed order: each layer's weights, then its bias.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    input: DMatrix<f64>,
    outputs: Vec<DMatrix<f64>>,
    version: u64,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.outputs.last().unwrap()
    }

    /// Post-activation output of every layer, first hidden layer first.
    pub fn layer_outputs(&self) -> &[DMatrix<f64>] {
        &self.outputs
    }
}

/// Gradients of a scalar loss with respect to parameters and inputs.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: MlpParams,
    pub input: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    params: MlpParams,
    version: u64,
}

impl Mlp {
    /// Uniform He-style initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = MlpParams::zeros(&spec);
        for layer in &mut params.layers {
            let bound = (6.0 / layer.weight.ncols() as f64).sqrt();
            // row-major draw order keeps the stream independent of storage layout
            for i in 0..layer.weight.nrows() {
                for j in 0..layer.weight.ncols() {
                    layer.weight[(i, j)] = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self { spec, params, version: 0 })
    }

    pub fn from_parts(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        spec.validate()?;
        if !params.matches_spec(&spec) {
            return Err(Error::Shape("parameters do not match the layer sizes".into()));
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("MLP parameters".into()));
        }
        Ok(Self { spec, params, version: 0 })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    /// Mutable access invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut MlpParams {
        self.version += 1;
        &mut self.params
    }

    /// Forward pass over a batch stored as columns (`in x batch`).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Tape)> {
        if x.nrows() != self.spec.input_size() {
            return Err(Error::Shape(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.spec.input_size()
            )));
        }
        let mut outputs = Vec::with_capacity(self.spec.depth());
        for (k, layer) in self.params.layers.iter().enumerate() {
            let prev = if k == 0 { x } else { &outputs[k - 1] };
            let mut z = &layer.weight * prev;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            self.spec.activation(k).apply(&mut z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("activations of layer {k}")));
            }
            outputs.push(z);
        }
        let out = outputs.last().unwrap().clone();
        Ok((
            out,
            Tape {
                input: x.clone(),
                outputs,
                version: self.version,
            },
        ))
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<(DVector<f64>, Tape)> {
        let batch = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let (out, tape) = self.forward_batch(&batch)?;
        Ok((out.column(0).into_owned(), tape))
    }

    /// Output only, no tape.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_batch(x)?.0)
    }

    /// Reverse-mode pass given dLoss/dOutput for the batch in `tape`.
    pub fn backward(&self, tape: &Tape, output_grad: &DMatrix<f64>) -> Result<Gradients> {
        if tape.version != self.version || tape.outputs.len() != self.spec.depth() {
            return Err(Error::StaleTape("tape was recorded against different parameters".into()));
        }
        let out = tape.output();
        if output_grad.shape() != out.shape() {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, output is {:?}",
                output_grad.shape(),
                out.shape()
            )));
        }
        let mut grads = self.params.zeros_like();
        let mut delta = output_grad.clone();
        for k in (0..self.spec.depth()).rev() {
            self.spec.activation(k).backprop(&tape.outputs[k], &mut delta);
            let prev = if k == 0 { &tape.input } else { &tape.outputs[k - 1] };
            let layer = &self.params.layers[k];
            if prev.nrows() != layer.weight.ncols() {
                return Err(Error::StaleTape(format!("layer {k} input width changed")));
            }
            grads.layers[k].weight = &delta * prev.transpose();
            grads.layers[k].bias = delta.column_sum();
            delta = layer.weight.tr_mul(&delta);
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize], hidden: Activation, out: Activation, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec::new(sizes.to_vec(), hidden, out).unwrap();
        let mut mlp = Mlp::init(spec, &mut rng).unwrap();
        for block in mlp.params_mut().blocks_mut() {
            for x in block.iter_mut() {
                *x += rng.random_range(-0.1..0.1);
            }
        }
        mlp
    }

    fn act(a: Activation, v: f64) -> f64 {
        match a {
            Activation::Linear => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Plain nested-loop forward pass.
    fn naive_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let depth = mlp.spec().depth();
        for (k, l) in mlp.params().layers.iter().enumerate() {
            let a = if k + 1 == depth {
                mlp.spec().output_activation
            } else {
                mlp.spec().hidden_activation
            };
            let mut next = vec![0.0; l.weight.nrows()];
            for (i, n) in next.iter_mut().enumerate() {
                let mut s = l.bias[i];
                for (j, c) in cur.iter().enumerate() {
                    s += l.weight[(i, j)] * c;
                }
                *n = act(a, s);
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Relu, Activation::Linear).unwrap();
        let mlp = Mlp::from_parts(spec.clone(), MlpParams::zeros(&spec)).unwrap();
        let (y, _) = mlp.forward(&DVector::from_vec(vec![1.0, -2.0, 3.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![3, 3], Activation::Relu, Activation::Linear).unwrap();
        let mut params = MlpParams::zeros(&spec);
        params.layers[0].weight = DMatrix::identity(3, 3);
        let mlp = Mlp::from_parts(spec, params).unwrap();
        let x = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        assert_eq!(mlp.forward(&x).unwrap().0, x);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mlp = net(&[6, 5, 4, 3], Activation::Tanh, Activation::Tanh, 1);
        let x = [0.3, -0.2, 0.9, 0.0, -1.1, 0.4];
        let (y, _) = mlp.forward(&DVector::from_row_slice(&x)).unwrap();
        let oracle = naive_forward(&mlp, &x);
        for (a, b) in y.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_layer_squared_loss_gradient_is_analytic() {
        let mlp = net(&[3, 2], Activation::Relu, Activation::Linear, 2);
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let y = DVector::from_vec(vec![0.1, 0.2]);
        let (out, tape) = mlp.forward(&x).unwrap();
        let resid = &out - &y;
        let g = mlp
            .backward(&tape, &DMatrix::from_column_slice(2, 1, (resid.clone() * 2.0).as_slice()))
            .unwrap();
        let expected_w = resid.clone() * 2.0 * x.transpose();
        assert!((&g.params.layers[0].weight - expected_w).amax() < 1e-14);
        assert!((&g.params.layers[0].bias - resid * 2.0).amax() < 1e-14);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mlp = net(&[4, 3, 2], Activation::Relu, Activation::Linear, 3);
        let (_, tape) = mlp.forward(&DVector::from_element(4, 0.7)).unwrap();
        let g = mlp.backward(&tape, &DMatrix::zeros(2, 1)).unwrap();
        assert!(g.params.blocks().all(|b| b.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut mlp = net(&[2, 2], Activation::Relu, Activation::Linear, 4);
        let (_, tape) = mlp.forward(&DVector::from_element(2, 1.0)).unwrap();
        mlp.params_mut().layers[0].bias[0] += 1.0;
        assert!(matches!(mlp.backward(&tape, &DMatrix::zeros(2, 1)), Err(Error::StaleTape(_))));
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let mlp = net(&[2, 2], Activation::Relu, Activation::Linear, 5);
        assert!(matches!(mlp.forward(&DVector::zeros(3)), Err(Error::Shape(_))));
        let err = mlp.forward(&DVector::from_vec(vec![f64::INFINITY, 0.0])).unwrap_err();
        assert!(err.to_string().contains("layer 0"));
        assert!(MlpSpec::new(vec![4], Activation::Relu, Activation::Linear).is_err());
        assert!(MlpSpec::new(vec![4, 0], Activation::Relu, Activation::Linear).is_err());
    }

    #[test]
    fn batch_forward_equals_columnwise_forward() {
        let mlp = net(&[3, 4, 2], Activation::Relu, Activation::Tanh, 6);
        let x = DMatrix::from_fn(3, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let (batch, _) = mlp.forward_batch(&x).unwrap();
        for j in 0..5 {
            let (col, _) = mlp.forward(&x.column(j).into_owned()).unwrap();
            assert_eq!(batch.column(j), col.column(0));
        }
    }
}
