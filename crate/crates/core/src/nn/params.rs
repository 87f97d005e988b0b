use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Scalar;

/// One named tensor in a network's registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// `false` for buffers such as BatchNorm running statistics.
    pub trainable: bool,
}

/// Flat, ordered registry of every weight and buffer of one network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
}

/// Index of an entry inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<T>,
        trainable: bool,
    ) -> ParamId {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(Entry {
            name,
            shape,
            data,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub(crate) fn push_normal(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        std: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let len = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("positive std");
        let data = (0..len).map(|_| T::lit(dist.sample(rng))).collect();
        self.push(name, shape, data, true)
    }

    pub(crate) fn push_const(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        value: f64,
        trainable: bool,
    ) -> ParamId {
        let len = shape.iter().product();
        self.push(name, shape, vec![T::lit(value); len], trainable)
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].data
    }

    pub fn entries(&self) -> &[Entry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Entry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&Entry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut Entry<T>> {
        self.entries.iter_mut().find(|e| e.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.data.iter().all(|v| v.is_finite()))
    }

    /// Zeroed gradient buffers laid out like this store.
    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            bufs: self
                .entries
                .iter()
                .map(|e| {
                    if e.trainable {
                        vec![T::zero(); e.data.len()]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: e
                        .data
                        .iter()
                        .map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN)))
                        .collect(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }
}

/// Gradient accumulators, one per trainable entry of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    bufs: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.bufs[id.0]
    }

    pub fn buffers(&self) -> &[Vec<T>] {
        &self.bufs
    }

    pub fn all_finite(&self) -> bool {
        self.bufs.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}
