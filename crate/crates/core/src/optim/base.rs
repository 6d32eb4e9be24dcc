//! First-order base optimizers.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::OptimError;
use crate::params::{ParamSet, TensorMap};
use crate::tensor::Tensor;

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "sgd lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimError::InvalidConfig(format!(
                "sgd momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

/// Bias-corrected Adam. Weight decay is added to the gradient before the
/// moment updates (coupled L2, not AdamW).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "adam lr must be > 0, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(OptimError::InvalidConfig(format!(
                    "adam {name} must be in [0, 1), got {b}"
                )));
            }
        }
        if !(self.eps > 0.0) {
            return Err(OptimError::InvalidConfig(format!(
                "adam eps must be > 0, got {}",
                self.eps
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Slot {
    Velocity(Tensor),
    Moments { m: Tensor, v: Tensor },
}

/// Step counter and per-parameter optimizer buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub slots: IndexMap<String, Slot>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Ensures every gradient is present, shaped like its parameter, and finite.
fn validate_grads(params: &ParamSet, grads: &TensorMap) -> Result<(), OptimError> {
    params.check_layout(grads)?;
    for (name, g) in grads.iter() {
        if !g.all_finite() {
            return Err(OptimError::NonFiniteGradient {
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

fn slot_mismatch(name: &str) -> OptimError {
    OptimError::InvalidConfig(format!(
        "optimizer state for `{name}` was created by a different optimizer"
    ))
}

/// `v ← μv + g + λw; w ← w − αv`.
pub fn sgd_step(
    params: &mut ParamSet,
    grads: &TensorMap,
    state: &mut OptimizerState,
    cfg: &SgdConfig,
) -> Result<(), OptimError> {
    cfg.validate()?;
    validate_grads(params, grads)?;
    for (name, _) in params.iter() {
        if let Some(slot) = state.slots.get(name) {
            if !matches!(slot, Slot::Velocity(_)) {
                return Err(slot_mismatch(name));
            }
        }
    }
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let g = grads.get(&name).expect("validated");
        let w = params.value_mut(&name).expect("validated");
        let slot = state
            .slots
            .entry(name.clone())
            .or_insert_with(|| Slot::Velocity(Tensor::zeros_like(w)));
        let Slot::Velocity(v) = slot else {
            unreachable!("checked above")
        };
        for ((vi, wi), &gi) in v.data_mut().iter_mut().zip(w.data_mut()).zip(g.data()) {
            *vi = cfg.momentum * *vi + gi + cfg.weight_decay * *wi;
            *wi -= cfg.lr * *vi;
        }
    }
    state.step += 1;
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &TensorMap,
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<(), OptimError> {
    cfg.validate()?;
    validate_grads(params, grads)?;
    for (name, _) in params.iter() {
        if let Some(slot) = state.slots.get(name) {
            if !matches!(slot, Slot::Moments { .. }) {
                return Err(slot_mismatch(name));
            }
        }
    }
    let t = state.step + 1;
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let g = grads.get(&name).expect("validated");
        let w = params.value_mut(&name).expect("validated");
        let slot = state
            .slots
            .entry(name.clone())
            .or_insert_with(|| Slot::Moments {
                m: Tensor::zeros_like(w),
                v: Tensor::zeros_like(w),
            });
        let Slot::Moments { m, v } = slot else {
            unreachable!("checked above")
        };
        for (((mi, vi), wi), &gi) in m
            .data_mut()
            .iter_mut()
            .zip(v.data_mut())
            .zip(w.data_mut())
            .zip(g.data())
        {
            let gd = gi + cfg.weight_decay * *wi;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gd;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gd * gd;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *wi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    state.step = t;
    Ok(())
}

/// The plain update a sharpness-aware wrapper delegates to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseOptimizer {
    Sgd(SgdConfig),
    Adam(AdamConfig),
}

impl BaseOptimizer {
    pub fn validate(&self) -> Result<(), OptimError> {
        match self {
            BaseOptimizer::Sgd(c) => c.validate(),
            BaseOptimizer::Adam(c) => c.validate(),
        }
    }

    pub fn step(
        &self,
        params: &mut ParamSet,
        grads: &TensorMap,
        state: &mut OptimizerState,
    ) -> Result<(), OptimError> {
        match self {
            BaseOptimizer::Sgd(c) => sgd_step(params, grads, state, c),
            BaseOptimizer::Adam(c) => adam_step(params, grads, state, c),
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            BaseOptimizer::Sgd(c) => c.lr,
            BaseOptimizer::Adam(c) => c.lr,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        match &mut self {
            BaseOptimizer::Sgd(c) => c.lr = lr,
            BaseOptimizer::Adam(c) => c.lr = lr,
        }
        self
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseOptimizer::Sgd(_) => "sgd",
            BaseOptimizer::Adam(_) => "adam",
        }
    }
}
