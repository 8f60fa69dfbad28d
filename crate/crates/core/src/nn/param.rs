//! Parameter storage and the SGD optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A named trainable tensor with matching value and gradient buffers.
#[derive(Debug, Clone)]
pub struct ParameterTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParameterTensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Train(format!("non-finite values in tensor `{}`", self.name)))
        }
    }
}

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Owns every parameter of a model. Modules hold `ParamId`s, not data.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    tensors: Vec<ParameterTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor initialized to zero.
    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.insert(name, rows, cols, vec![0.0; rows * cols])
    }

    /// Registers a tensor initialized uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn uniform_init(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, rows, cols, values)
    }

    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) -> ParamId {
        assert_eq!(values.len(), rows * cols, "value buffer mismatch for `{name}`");
        let id = ParamId(self.tensors.len());
        self.tensors.push(ParameterTensor {
            name: name.to_string(),
            rows,
            cols,
            values,
            grad: vec![0.0; rows * cols],
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &ParameterTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParameterTensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            for g in &mut t.grad {
                *g = 0.0;
            }
        }
    }

    /// Plain SGD step over `group`, with global-norm gradient clipping.
    ///
    /// The clip norm is computed over the group only, so disjoint models
    /// stepped separately never influence each other's updates.
    pub fn sgd_step(&mut self, group: &[ParamId], learning_rate: f64, clip_norm: f64) {
        let mut sq = 0.0;
        for id in group {
            for g in &self.tensors[id.0].grad {
                sq += g * g;
            }
        }
        let norm = sq.sqrt();
        let scale = if clip_norm > 0.0 && norm > clip_norm { clip_norm / norm } else { 1.0 };
        for id in group {
            let t = &mut self.tensors[id.0];
            for (v, g) in t.values.iter_mut().zip(t.grad.iter()) {
                *v -= learning_rate * scale * g;
            }
        }
    }
}
