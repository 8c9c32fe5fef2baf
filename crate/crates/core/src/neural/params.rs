use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

/// Named, ordered collection of trainable tensors and their gradient buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    params: Vec<Parameter<S>>,
    by_name: BTreeMap<String, ParamId>,
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    pub(crate) grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ParamId) -> Option<&[S]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn is_reachable(&self, id: ParamId) -> bool {
        self.get(id).is_some()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        id
    }

    /// Adds a parameter drawn from N(0, std^2).
    pub fn add_normal<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("valid std");
        let data = (0..n).map(|_| S::of(dist.sample(rng))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        self.add(name, Tensor::full(shape, S::of(v)))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<S> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<S>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<S>> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = S::zero());
        }
    }

    /// Adds `grads` into the stored gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients<S>) {
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                for (dst, &src) in p.grad.data_mut().iter_mut().zip(g) {
                    *dst += src;
                }
            }
        }
    }

    /// Copies values from `other`, matching by name and shape.
    pub fn load_from(&mut self, other: &[(String, Tensor<S>)]) -> Result<()> {
        let mut seen = 0;
        for (name, value) in other {
            let id = self
                .id(name)
                .ok_or_else(|| Error::data(format!("unknown parameter {name} in checkpoint")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != value.shape() {
                return Err(Error::data(format!(
                    "parameter {name}: shape {:?} in checkpoint, {:?} in model",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value.clone();
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(Error::data(format!(
                "checkpoint holds {seen} of {} parameters",
                self.params.len()
            )));
        }
        Ok(())
    }

    pub fn named_values(&self) -> Vec<(String, Tensor<S>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.cast());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn names_are_unique_and_ordered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f32>::new();
        let a = store.add_normal("a", &[2, 3], 0.02, &mut rng);
        let b = store.add_const("b", &[3], 1.0);
        assert_eq!(store.id("a"), Some(a));
        assert_eq!(store.id("b"), Some(b));
        assert_eq!(store.num_values(), 9);
        assert!(store.value(b).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let mut store = ParamStore::<f32>::new();
        store.add_const("w", &[2], 0.0);
        let bad = vec![("w".to_string(), Tensor::zeros(&[3]))];
        assert!(store.load_from(&bad).is_err());
        let good = vec![("w".to_string(), Tensor::full(&[2], 4.0))];
        store.load_from(&good).unwrap();
        assert_eq!(store.value(ParamId(0)).data(), &[4.0, 4.0]);
    }
}
