//! Weight file layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "LVMLPW\0\0"
//! version      u32      1
//! hidden act   u8       0 linear, 1 relu, 2 tanh
//! output act   u8
//! reserved     u16      0
//! n_sizes      u32
//! sizes        n_sizes x u64
//! per layer    weight (out x in, row-major f64) then bias (out x f64)
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Activation, Layer, Mlp, MlpParams, MlpSpec};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;

const MAGIC: &[u8; 8] = b"LVMLPW\0\0";
const VERSION: u32 = 1;

pub fn weights_to_bytes(mlp: &Mlp) -> Vec<u8> {
    let spec = mlp.spec();
    let mut out = Vec::with_capacity(32 + 8 * mlp.params().parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(spec.hidden_activation.code());
    out.push(spec.output_activation.code());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(spec.layer_sizes.len() as u32).to_le_bytes());
    for s in &spec.layer_sizes {
        out.extend_from_slice(&(*s as u64).to_le_bytes());
    }
    for layer in &mlp.params().layers {
        for row in layer.weight.row_iter() {
            for x in row.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        for x in layer.bias.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptWeights(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::CorruptWeights("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::CorruptWeights(format!("unsupported version {version}")));
    }
    let acts = c.take(4)?;
    let hidden = Activation::from_code(acts[0]).ok_or_else(|| Error::CorruptWeights("bad hidden activation".into()))?;
    let output = Activation::from_code(acts[1]).ok_or_else(|| Error::CorruptWeights("bad output activation".into()))?;
    let n = c.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::CorruptWeights(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        let s = c.u64()?;
        if s == 0 || s > (1 << 24) {
            return Err(Error::CorruptWeights(format!("implausible layer size {s}")));
        }
        sizes.push(s as usize);
    }
    let spec = MlpSpec::new(sizes, hidden, output)?;
    let mut layers = Vec::with_capacity(spec.depth());
    for w in spec.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut weight = DMatrix::zeros(fan_out, fan_in);
        for i in 0..fan_out {
            for j in 0..fan_in {
                weight[(i, j)] = c.f64()?;
            }
        }
        let mut bias = DVector::zeros(fan_out);
        for i in 0..fan_out {
            bias[i] = c.f64()?;
        }
        layers.push(Layer { weight, bias });
    }
    if c.pos != bytes.len() {
        return Err(Error::CorruptWeights(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Mlp::from_parts(spec, MlpParams { layers }).map_err(|e| Error::CorruptWeights(e.to_string()))
}

pub fn save_weights(mlp: &Mlp, path: &Path) -> Result<()> {
    write_atomic(path, &weights_to_bytes(mlp))
}

pub fn load_weights(path: &Path) -> Result<Mlp> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    weights_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = MlpSpec::new(vec![5, 7, 3], Activation::Tanh, Activation::Linear).unwrap();
        let mlp = Mlp::init(spec, &mut rng).unwrap();
        let back = weights_from_bytes(&weights_to_bytes(&mlp)).unwrap();
        assert_eq!(back.spec(), mlp.spec());
        for (a, b) in back.params().blocks().zip(mlp.params().blocks()) {
            let a: Vec<u64> = a.iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = b.iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_and_padded_files_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = MlpSpec::new(vec![3, 2], Activation::Relu, Activation::Linear).unwrap();
        let bytes = weights_to_bytes(&Mlp::init(spec, &mut rng).unwrap());
        assert!(matches!(
            weights_from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::CorruptWeights(_))
        ));
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(weights_from_bytes(&padded).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(weights_from_bytes(&bad).is_err());
    }

    #[test]
    fn full_size_encoder_loads_with_its_spec() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MlpSpec::new(vec![1936, 512, 250, 4], Activation::Relu, Activation::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::init(spec.clone(), &mut rng).unwrap();
        let path = dir.path().join("encoder.bin");
        save_weights(&mlp, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.spec(), &spec);
        assert_eq!(back.params(), mlp.params());
    }
}
