use serde::{Deserialize, Serialize};

use super::DiffError;
use crate::num::Real;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

/// Named flat tensors. Shapes are fixed once a tensor is added.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> ParamId {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), values.len(), "shape/len mismatch for {name}");
        assert!(self.id(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, shape, values });
        ParamId(self.params.len() - 1)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: vec![T::zero(); p.values.len()],
                })
                .collect(),
        }
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.params[id.0].values
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].values
    }

    pub fn by_name(&self, name: &str) -> Option<&[T]> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn same_layout<U: Real>(&self, other: &ParamSet<U>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// `self += other`, tensor by tensor in index order.
    pub fn accumulate(&mut self, other: &Self) -> Result<(), DiffError> {
        if !self.same_layout(other) {
            return Err(DiffError::ShapeMismatch("accumulate".into()));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, &y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for p in &mut self.params {
            for v in &mut p.values {
                *v *= s;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.params {
            p.values.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    /// Flat coordinate `k` across all tensors, in insertion order.
    pub fn flat_get(&self, k: usize) -> T {
        let (i, j) = self.locate(k);
        self.params[i].values[j]
    }

    pub fn flat_set(&mut self, k: usize, v: T) {
        let (i, j) = self.locate(k);
        self.params[i].values[j] = v;
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (i, p) in self.params.iter().enumerate() {
            if k < p.values.len() {
                return (i, k);
            }
            k -= p.values.len();
        }
        panic!("flat index out of range");
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_indexing_spans_tensors() {
        let mut p = ParamSet::<f64>::new();
        p.add("a", vec![2], vec![1.0, 2.0]);
        p.add("b", vec![1, 3], vec![3.0, 4.0, 5.0]);
        assert_eq!(p.numel(), 5);
        assert_eq!(p.flat_get(3), 4.0);
        p.flat_set(4, 9.0);
        assert_eq!(p.by_name("b").unwrap(), &[3.0, 4.0, 9.0]);
    }

    #[test]
    fn accumulate_requires_layout() {
        let mut a = ParamSet::<f64>::new();
        a.add("x", vec![1], vec![1.0]);
        let mut b = ParamSet::<f64>::new();
        b.add("y", vec![1], vec![1.0]);
        assert!(a.accumulate(&b).is_err());
        let c = a.clone();
        a.accumulate(&c).unwrap();
        assert_eq!(a.by_name("x").unwrap(), &[2.0]);
    }
}
