use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{cast, Real};

/// Index of an entry inside a [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    /// Running statistics are stored alongside weights but never updated by the optimizer.
    pub trainable: bool,
}

/// Named, shaped parameters with gradient slots, iterated in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
    grads_ready: bool,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            grads_ready: false,
        }
    }

    pub fn add(
        &mut self,
        name: &str,
        shape: &[usize],
        value: Vec<T>,
        trainable: bool,
    ) -> Result<ParamId> {
        let numel: usize = shape.iter().product();
        if value.len() != numel {
            return Err(Error::shape(
                name,
                format!("{} values for shape {shape:?}", value.len()),
            ));
        }
        if self.index.contains_key(name) {
            return Err(Error::Usage(format!("duplicate parameter name {name}")));
        }
        let id = self.entries.len();
        self.index.insert(name.to_string(), id);
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![T::zero(); numel],
            value,
            trainable,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].value
    }

    #[inline]
    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].grad
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].grad
    }

    /// Value and gradient slot of the same entry, borrowed together.
    #[inline]
    pub fn value_and_grad(&mut self, id: ParamId) -> (&[T], &mut [T]) {
        let e = &mut self.entries[id.0];
        (&e.value, &mut e.grad)
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = T::zero());
        }
        self.grads_ready = false;
    }

    pub(crate) fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    pub(crate) fn clear_grads_ready(&mut self) {
        self.grads_ready = false;
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    value: e.value.iter().map(|v| cast(v.to_f64_lossy())).collect(),
                    grad: e.grad.iter().map(|v| cast(v.to_f64_lossy())).collect(),
                    trainable: e.trainable,
                })
                .collect(),
            index: self.index.clone(),
            grads_ready: self.grads_ready,
        }
    }
}

/// Seeded parameter registration used by layer constructors.
pub struct ParamBuilder<T> {
    params: ModelParams<T>,
    rng: ChaCha8Rng,
    prefix: Vec<String>,
}

impl<T: Real> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            params: ModelParams::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            prefix: Vec::new(),
        }
    }

    pub fn push_scope(&mut self, name: impl Into<String>) {
        self.prefix.push(name.into());
    }

    pub fn pop_scope(&mut self) {
        self.prefix.pop();
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix.join("."))
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| cast(self.rng.random_range(-bound..=bound)))
            .collect();
        let full = self.full_name(name);
        self.params.add(&full, shape, values, true)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let full = self.full_name(name);
        self.params.add(&full, shape, vec![cast(value); n], true)
    }

    /// Non-trainable state such as running statistics.
    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let full = self.full_name(name);
        self.params.add(&full, shape, vec![cast(value); n], false)
    }

    pub fn finish(self) -> ModelParams<T> {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_scoped() {
        let mut b = ParamBuilder::<f64>::new(1);
        b.push_scope("enc0");
        let w = b.uniform("weight", &[2, 3], 0.5).unwrap();
        b.buffer("running_var", &[2], 1.0).unwrap();
        assert!(b.uniform("weight", &[1], 0.5).is_err());
        b.pop_scope();
        let p = b.finish();
        assert_eq!(p.find("enc0.weight"), Some(w));
        assert_eq!(p.num_trainable(), 6);
        assert!(p.value(w).iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn same_seed_same_values() {
        let make = |seed| {
            let mut b = ParamBuilder::<f32>::new(seed);
            b.uniform("a", &[16], 1.0).unwrap();
            b.finish()
        };
        assert_eq!(make(9), make(9));
        assert_ne!(make(9), make(10));
    }
}
