use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};

/// Ordered, named parameter tensors for one assembled model.
///
/// Insertion order is the canonical parameter order: optimizers, flat dumps,
/// and bound tape leaves all follow it.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// Shape manifest accompanying a flat parameter dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamManifest {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.to_string(), self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.index[name]]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.index[name];
        &mut self.tensors[i]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor_at(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    /// Total scalar entries across all tensors.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Register every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let ids = self
            .names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| (n.clone(), tape.leaf(t.clone(), true)))
            .collect();
        BoundParams { ids }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn manifest(&self) -> ParamManifest {
        ParamManifest {
            entries: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| (n.clone(), t.shape().to_vec()))
                .collect(),
        }
    }

    pub fn from_flat(manifest: &ParamManifest, flat: &[f64]) -> Option<Self> {
        let mut store = Self::new();
        let mut off = 0;
        for (name, shape) in &manifest.entries {
            let n: usize = shape.iter().product();
            let slice = flat.get(off..off + n)?;
            store.add(name, Tensor::new(shape.clone(), slice.to_vec()).ok()?);
            off += n;
        }
        (off == flat.len()).then_some(store)
    }

    /// Overwrite all tensors from another store with identical layout.
    pub fn copy_from(&mut self, other: &ParamStore) {
        assert_eq!(self.names, other.names);
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().copy_from_slice(b.data());
        }
    }
}

/// Tape leaf ids for a bound [`ParamStore`], keyed by parameter name.
pub struct BoundParams {
    ids: HashMap<String, NodeId>,
}

impl BoundParams {
    /// Bind explicit (name, leaf) pairs; used by gradient-check harnesses
    /// that need parameter leaves under external control.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, NodeId)>) -> Self {
        Self {
            ids: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }
}

/// Uniform init on (-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_fan_in<R: Rng>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(shape, data).expect("shape/data agree")
}

pub fn constant(shape: Vec<usize>, v: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, vec![v; n]).expect("shape/data agree")
}

pub fn identity(d: usize) -> Tensor {
    let mut t = Tensor::zeros(vec![d, d]);
    for i in 0..d {
        t.data_mut()[i * d + i] = 1.0;
    }
    t
}
