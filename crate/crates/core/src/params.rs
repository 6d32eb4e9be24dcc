//! Named tensor collections: gradients, perturbations and parameter sets.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, OptimError};
use crate::tensor::Tensor;

/// Insertion-ordered map from parameter name to tensor.
///
/// Used for gradients, perturbations and landscape directions, all of which
/// are keyed the same way as the [`ParamSet`] they belong to.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TensorMap(IndexMap<String, Tensor>);

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.0.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.0.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total element count across all tensors.
    pub fn numel(&self) -> usize {
        self.0.values().map(Tensor::len).sum()
    }

    /// Squared 2-norm over all tensors concatenated.
    pub fn global_sq_norm(&self) -> f64 {
        self.0.values().map(Tensor::sq_norm).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.global_sq_norm().sqrt()
    }

    pub fn scale(&self, c: f64) -> TensorMap {
        TensorMap(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v.scale(c)))
                .collect(),
        )
    }

    pub fn zeros_like(&self) -> TensorMap {
        TensorMap(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros_like(v)))
                .collect(),
        )
    }

    /// Inner product over matching names; names and shapes must agree.
    pub fn dot(&self, other: &TensorMap) -> Result<f64, EngineError> {
        let mut acc = 0.0;
        for (name, a) in &self.0 {
            let b = other.0.get(name).ok_or(EngineError::ShapeMismatch {
                op: "dot",
                lhs: a.shape().to_vec(),
                rhs: Vec::new(),
            })?;
            acc += a.dot(b)?;
        }
        Ok(acc)
    }

    pub fn all_finite(&self) -> bool {
        self.0.values().all(Tensor::all_finite)
    }

    /// Largest elementwise absolute difference between two maps with the same layout.
    pub fn max_abs_diff(&self, other: &TensorMap) -> Result<f64, EngineError> {
        let mut worst: f64 = 0.0;
        for (name, a) in &self.0 {
            let b = other.0.get(name).ok_or(EngineError::ShapeMismatch {
                op: "max_abs_diff",
                lhs: a.shape().to_vec(),
                rhs: Vec::new(),
            })?;
            worst = worst.max(a.max_abs_diff(b)?);
        }
        Ok(worst)
    }

    pub fn bitwise_eq(&self, other: &TensorMap) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }
}

impl FromIterator<(String, Tensor)> for TensorMap {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        TensorMap(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a TensorMap {
    type Item = (&'a String, &'a Tensor);
    type IntoIter = indexmap::map::Iter<'a, String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A single trainable tensor and its most recent gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

/// Ordered, uniquely named collection of parameters.
///
/// Iteration follows insertion order, which for models is layer order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Returns `false` and leaves the set untouched if the
    /// name is already taken.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> bool {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return false;
        }
        self.entries.insert(name, Param { value, grad: None });
        true
    }

    pub fn from_values(values: TensorMap) -> Self {
        let entries = values
            .0
            .into_iter()
            .map(|(k, value)| (k, Param { value, grad: None }))
            .collect();
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|p| &p.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|p| &mut p.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    /// Copies of all parameter values, in order.
    pub fn values(&self) -> TensorMap {
        self.entries
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }

    pub fn global_sq_norm(&self) -> f64 {
        self.entries.values().map(|p| p.value.sq_norm()).sum()
    }

    /// Stores `grads` alongside the values. Every parameter must receive a
    /// gradient of matching shape.
    pub fn attach_grads(&mut self, grads: &TensorMap) -> Result<(), OptimError> {
        self.check_layout(grads)?;
        for (name, p) in self.entries.iter_mut() {
            p.grad = grads.get(name).cloned();
        }
        Ok(())
    }

    /// Gradients currently attached, if every parameter has one.
    pub fn grads(&self) -> Option<TensorMap> {
        self.entries
            .iter()
            .map(|(k, p)| p.grad.clone().map(|g| (k.clone(), g)))
            .collect()
    }

    pub fn clear_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad = None;
        }
    }

    /// Checks that `other` names exactly this set's parameters with the same shapes.
    pub fn check_layout(&self, other: &TensorMap) -> Result<(), OptimError> {
        for (name, p) in &self.entries {
            let t = other.get(name).ok_or_else(|| OptimError::MissingGradient {
                name: name.clone(),
            })?;
            p.value.expect_same_shape(t, "param layout")?;
        }
        if let Some(extra) = other.names().find(|n| !self.entries.contains_key(*n)) {
            return Err(OptimError::UnknownParameter {
                name: extra.to_string(),
            });
        }
        Ok(())
    }

    /// New parameter set with values `w + c * delta`; gradients are dropped.
    pub fn offset(&self, delta: &TensorMap, c: f64) -> Result<ParamSet, OptimError> {
        self.check_layout(delta)?;
        let mut out = self.clone();
        for (name, p) in out.entries.iter_mut() {
            if let Some(d) = delta.get(name) {
                p.value.axpy(c, d)?;
            }
            p.grad = None;
        }
        Ok(out)
    }

    pub fn bitwise_eq(&self, other: &ParamSet) -> bool {
        self.values().bitwise_eq(&other.values())
    }
}
