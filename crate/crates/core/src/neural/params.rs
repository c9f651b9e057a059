use std::collections::HashMap;
use std::ops::{Index, IndexMut};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Array2<Real>,
    pub trainable: bool,
}

/// Named parameter tensors. Each tensor is initialised from its own RNG
/// stream keyed by (seed, name), so the order of registration never changes
/// the initial values.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    seed: u64,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x100000001b3)
    })
}

impl ParameterSet {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<ParamId> {
        let value = match init {
            Init::Zeros => Array2::zeros((rows, cols)),
            Init::Uniform(a) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()));
                Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a) as Real)
            }
        };
        self.add_value(name, value, true)
    }

    pub fn add_value(
        &mut self,
        name: &str,
        value: Array2<Real>,
        trainable: bool,
    ) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.tensors.len());
        self.tensors.push(Tensor {
            name: name.to_string(),
            value,
            trainable,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.tensors[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Array2<Real> {
        &self.tensors[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<Real> {
        &mut self.tensors[id.0].value
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.tensors[id.0].trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            grads: self
                .tensors
                .iter()
                .map(|t| Array2::zeros(t.value.raw_dim()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.value.iter().all(|v| v.is_finite()))
    }
}

/// Gradient buffers, one per parameter, with the parameter's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Array2<Real>>,
}

impl Gradients {
    pub fn fill_zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: Real) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn global_norm(&self) -> Real {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<Real>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Index<ParamId> for Gradients {
    type Output = Array2<Real>;

    fn index(&self, id: ParamId) -> &Array2<Real> {
        &self.grads[id.0]
    }
}

impl IndexMut<ParamId> for Gradients {
    fn index_mut(&mut self, id: ParamId) -> &mut Array2<Real> {
        &mut self.grads[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_keyed_by_name_not_order() {
        let mut a = ParameterSet::new(5);
        let x = a.add("x", 3, 4, Init::Uniform(0.5)).unwrap();
        let y = a.add("y", 2, 2, Init::Uniform(0.5)).unwrap();
        let mut b = ParameterSet::new(5);
        let y2 = b.add("y", 2, 2, Init::Uniform(0.5)).unwrap();
        let x2 = b.add("x", 3, 4, Init::Uniform(0.5)).unwrap();
        assert_eq!(a.get(x), b.get(x2));
        assert_eq!(a.get(y), b.get(y2));
        assert!(a.get(x).iter().all(|v| v.abs() <= 0.5));
        let mut c = ParameterSet::new(6);
        let x3 = c.add("x", 3, 4, Init::Uniform(0.5)).unwrap();
        assert_ne!(a.get(x), c.get(x3));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParameterSet::new(0);
        p.add("w", 1, 1, Init::Zeros).unwrap();
        assert!(p.add("w", 1, 1, Init::Zeros).is_err());
    }

    #[test]
    fn grads_match_shapes() {
        let mut p = ParameterSet::new(0);
        let w = p.add("w", 3, 2, Init::Zeros).unwrap();
        let g = p.zero_grads();
        assert_eq!(g[w].dim(), (3, 2));
    }
}
