use crate::{ModelError, Result};
use candle_core::{Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Named, ordered trainable tensors.
///
/// Initial values come from a ChaCha stream keyed by `(seed, name)`, so
/// adding a parameter never perturbs the others.
#[derive(Debug, Clone)]
pub struct ParamStore {
    seed: u64,
    entries: Vec<(String, Var)>,
}

/// Flat copy of a store: `(name, shape, values)`.
pub type Snapshot = Vec<(String, Vec<usize>, Vec<f32>)>;

fn stream_of(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { seed, entries: Vec::new() }
    }

    fn push(&mut self, name: &str, shape: &[usize], values: Vec<f32>) -> Result<Tensor> {
        if self.get(name).is_some() {
            return Err(ModelError::Config(format!("duplicate parameter {name}")));
        }
        let var = Var::from_tensor(&Tensor::from_vec(values, shape, &Device::Cpu)?)?;
        let t = var.as_tensor().clone();
        self.entries.push((name.to_string(), var));
        Ok(t)
    }

    /// Uniform in `[-scale, scale)`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], scale: f32) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream_of(name));
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        self.push(name, shape, values)
    }

    /// Glorot-style uniform init for a `[fan_in, fan_out]` matrix.
    pub fn glorot(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Tensor> {
        let scale = (6.0 / (fan_in + fan_out) as f32).sqrt();
        self.uniform(name, &[fan_in, fan_out], scale)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.push(name, shape, vec![value; n])
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        self.get(name)
            .map(|v| v.as_tensor().clone())
            .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        self.entries
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.dims().to_vec(), v.flatten_all()?.to_vec1::<f32>()?)))
            .collect()
    }

    /// Overwrites every parameter named in `snap`; shapes must agree and
    /// every parameter of the store must be present.
    pub fn load(&self, snap: &Snapshot) -> Result<()> {
        for (name, var) in &self.entries {
            let (_, shape, values) = snap
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| ModelError::Checkpoint(format!("parameter {name} missing")))?;
            if shape.as_slice() != var.dims() {
                return Err(ModelError::Checkpoint(format!("parameter {name}: shape {shape:?} vs {:?}", var.dims())));
            }
            var.set(&Tensor::from_vec(values.clone(), shape.as_slice(), &Device::Cpu)?)?;
        }
        Ok(())
    }

    /// Rebinds every parameter to fresh storage holding the same values, so
    /// the copy can be trained without touching `self`.
    pub fn deep_clone(&self) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|(n, v)| Ok((n.clone(), Var::from_tensor(&v.as_tensor().copy()?)?)))
            .collect::<Result<_>>()?;
        Ok(Self { seed: self.seed, entries })
    }
}
