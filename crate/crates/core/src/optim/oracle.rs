use std::cell::Cell;

use crate::error::OracleError;
use crate::params::{ParamSet, TensorMap};

/// Deterministic source of `(loss, gradients)` at arbitrary parameter values.
///
/// Implementations must return bitwise-identical results for identical
/// `(params, batch)` inputs; sharpness-aware steps depend on evaluating the
/// same batch at two points.
pub trait GradientOracle {
    type Batch: ?Sized;

    fn loss_and_grad(
        &self,
        params: &ParamSet,
        batch: &Self::Batch,
    ) -> Result<(f64, TensorMap), OracleError>;

    /// Loss only. Override when a forward pass is cheaper than a full evaluation.
    fn loss(&self, params: &ParamSet, batch: &Self::Batch) -> Result<f64, OracleError> {
        self.loss_and_grad(params, batch).map(|(l, _)| l)
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for &O {
    type Batch = O::Batch;

    fn loss_and_grad(
        &self,
        params: &ParamSet,
        batch: &Self::Batch,
    ) -> Result<(f64, TensorMap), OracleError> {
        (**self).loss_and_grad(params, batch)
    }

    fn loss(&self, params: &ParamSet, batch: &Self::Batch) -> Result<f64, OracleError> {
        (**self).loss(params, batch)
    }
}

/// Adapts a closure into a batch-free oracle.
pub struct FnOracle<F>(pub F);

impl<F> GradientOracle for FnOracle<F>
where
    F: Fn(&ParamSet) -> Result<(f64, TensorMap), OracleError>,
{
    type Batch = ();

    fn loss_and_grad(&self, params: &ParamSet, _: &()) -> Result<(f64, TensorMap), OracleError> {
        (self.0)(params)
    }
}

/// Wraps an oracle and counts how often it is called.
pub struct CountingOracle<O> {
    inner: O,
    gradient_calls: Cell<usize>,
    loss_calls: Cell<usize>,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            gradient_calls: Cell::new(0),
            loss_calls: Cell::new(0),
        }
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradient_calls.get()
    }

    pub fn loss_calls(&self) -> usize {
        self.loss_calls.get()
    }

    pub fn reset(&self) {
        self.gradient_calls.set(0);
        self.loss_calls.set(0);
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: GradientOracle> GradientOracle for CountingOracle<O> {
    type Batch = O::Batch;

    fn loss_and_grad(
        &self,
        params: &ParamSet,
        batch: &Self::Batch,
    ) -> Result<(f64, TensorMap), OracleError> {
        self.gradient_calls.set(self.gradient_calls.get() + 1);
        self.inner.loss_and_grad(params, batch)
    }

    fn loss(&self, params: &ParamSet, batch: &Self::Batch) -> Result<f64, OracleError> {
        self.loss_calls.set(self.loss_calls.get() + 1);
        self.inner.loss(params, batch)
    }
}
