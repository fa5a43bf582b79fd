use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(())
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialisation.
    pub(crate) fn insert_weight(&mut self, name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
        let bound = 1.0 / (shape[0] as f64).sqrt();
        let mut t = Tensor::zeros(shape);
        t.data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(-bound..bound));
        self.insert(name, t)
    }

    pub(crate) fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub(crate) fn expect(&self, name: &str) -> &Tensor {
        self.get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from store"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Zero-filled buffers matching every parameter.
    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.numel()]).collect()
    }

    /// True when both stores hold the same names, shapes and bit-identical values.
    pub fn bit_identical(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Lazily records parameters on a tape as leaves.
pub struct Binder<'a> {
    store: &'a ParamStore,
    vars: Vec<Option<Var>>,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Binder {
            store,
            vars: vec![None; store.len()],
        }
    }

    /// Binder whose parameters are already recorded as `vars`, one per
    /// store entry in order.
    pub fn bound(store: &'a ParamStore, vars: &[Var]) -> Self {
        assert_eq!(vars.len(), store.len(), "one var per parameter");
        Binder {
            store,
            vars: vars.iter().copied().map(Some).collect(),
        }
    }

    pub fn get(&mut self, tape: &mut Tape, name: &str) -> Var {
        let i = self
            .store
            .index_of(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from store"));
        *self.vars[i].get_or_insert_with(|| tape.leaf(self.store.tensors[i].clone()))
    }

    /// Adds `scale` times each bound parameter's gradient into `acc`.
    /// Must follow `tape.backward`.
    pub fn accumulate_grads(&self, tape: &Tape, acc: &mut [Vec<f64>], scale: f64) {
        for (slot, var) in acc.iter_mut().zip(&self.vars) {
            let Some(v) = var else { continue };
            if let Some(g) = tape.grad(*v) {
                slot.iter_mut().zip(g).for_each(|(a, x)| *a += scale * x);
            }
        }
    }
}
