//! Sharpness-aware steps: SAM and its gradient-centralized variant.
//!
//! Both perform two oracle evaluations per step. The first, at `w`, yields
//! the ascent direction; the perturbation `ε = ρ·g/‖g‖₂` uses the global
//! 2-norm over every parameter tensor. The second evaluation, at `w + ε`,
//! yields the gradient the base optimizer applies at the original `w`.
//!
//! GCSAM centralizes the ascent gradient before normalizing it and, unless
//! `centralize_descent` is off, also centralizes the descent gradient.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::base::{BaseOptimizer, OptimizerState};
use super::oracle::GradientOracle;
use crate::centralization::{centralize_param_set, AggregateReport, GcConfig};
use crate::error::OptimError;
use crate::params::{ParamSet, TensorMap};

fn default_norm_order() -> u32 {
    2
}

fn default_true() -> bool {
    true
}

fn default_zero_grad_tolerance() -> f64 {
    1e-12
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamConfig {
    pub rho: f64,
    #[serde(default = "default_norm_order")]
    pub norm_order: u32,
    #[serde(default = "default_true")]
    pub centralize_ascent: bool,
    #[serde(default = "default_true")]
    pub centralize_descent: bool,
    #[serde(default)]
    pub gc: GcConfig,
    #[serde(default = "default_zero_grad_tolerance")]
    pub zero_grad_tolerance: f64,
}

impl SamConfig {
    /// GCSAM defaults: both ascent and descent centralized.
    pub fn new(rho: f64) -> Self {
        Self {
            rho,
            norm_order: 2,
            centralize_ascent: true,
            centralize_descent: true,
            gc: GcConfig::default(),
            zero_grad_tolerance: default_zero_grad_tolerance(),
        }
    }

    /// Plain SAM: no centralization anywhere.
    pub fn plain(rho: f64) -> Self {
        Self {
            centralize_ascent: false,
            centralize_descent: false,
            ..Self::new(rho)
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "rho must be >= 0, got {}",
                self.rho
            )));
        }
        if self.norm_order != 2 {
            return Err(OptimError::UnsupportedNormOrder(self.norm_order));
        }
        if !(self.zero_grad_tolerance >= 0.0) {
            return Err(OptimError::InvalidConfig(
                "zero_grad_tolerance must be >= 0".into(),
            ));
        }
        self.gc.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Perturbation {
    pub eps: TensorMap,
    /// Global 2-norm of the gradient the perturbation was built from.
    pub grad_norm: f64,
    pub eps_norm: f64,
}

/// `ε = ρ·g/‖g‖₂` with the norm taken over all tensors; `ε = 0` when
/// `‖g‖₂ <= zero_grad_tolerance` or `ρ = 0`.
///
/// Centralization is the caller's job: pass `g_GC` to get `ε_GC`.
pub fn compute_perturbation(grads: &TensorMap, cfg: &SamConfig) -> Result<Perturbation, OptimError> {
    cfg.validate()?;
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(OptimError::NonFiniteGradient {
            name: name.to_string(),
        });
    }
    let grad_norm = grads.global_norm();
    if cfg.rho == 0.0 || grad_norm <= cfg.zero_grad_tolerance {
        return Ok(Perturbation {
            eps: grads.zeros_like(),
            grad_norm,
            eps_norm: 0.0,
        });
    }
    let eps = grads.scale(cfg.rho / grad_norm);
    let eps_norm = eps.global_norm();
    Ok(Perturbation {
        eps,
        grad_norm,
        eps_norm,
    })
}

/// Per-step measurements, one row of the telemetry CSV.
#[derive(Clone, Debug, Serialize)]
pub struct StepTelemetry {
    pub step: u64,
    pub loss_clean: f64,
    /// Loss at `w + ε`; absent for single-evaluation optimizers.
    pub loss_perturbed: Option<f64>,
    pub eps_norm: f64,
    /// ‖g‖² of the first-evaluation gradient.
    pub orig_sq_norm: f64,
    /// ‖g_GC‖² of the ascent gradient (equal to `orig_sq_norm` without centralization).
    pub gc_sq_norm: f64,
    pub step_wall_ns: u64,
    pub oracle_calls: u32,
    #[serde(skip)]
    pub ascent_report: Option<AggregateReport>,
    #[serde(skip)]
    pub descent_report: Option<AggregateReport>,
}

impl StepTelemetry {
    pub const CSV_HEADER: &'static str =
        "step,loss_clean,loss_perturbed,eps_norm,orig_sq_norm,gc_sq_norm,step_wall_ns";

    pub fn csv_row(&self) -> String {
        let perturbed = self
            .loss_perturbed
            .map(|v| format!("{v:.17e}"))
            .unwrap_or_default();
        format!(
            "{},{:.17e},{},{:.17e},{:.17e},{:.17e},{}",
            self.step,
            self.loss_clean,
            perturbed,
            self.eps_norm,
            self.orig_sq_norm,
            self.gc_sq_norm,
            self.step_wall_ns
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn two_pass_step<O: GradientOracle + ?Sized>(
    params: &mut ParamSet,
    batch: &O::Batch,
    oracle: &O,
    base: &BaseOptimizer,
    state: &mut OptimizerState,
    cfg: &SamConfig,
    centralize_ascent: bool,
    centralize_descent: bool,
) -> Result<StepTelemetry, OptimError> {
    let start = Instant::now();
    cfg.validate()?;
    base.validate()?;

    let (loss_clean, grads) = oracle.loss_and_grad(params, batch)?;
    let orig_sq_norm = grads.global_sq_norm();

    let (ascent, ascent_report) = if centralize_ascent {
        let (g, rep) = centralize_param_set(&grads, &cfg.gc)?;
        (g, Some(rep))
    } else {
        (grads, None)
    };
    let gc_sq_norm = ascent_report
        .as_ref()
        .map_or(orig_sq_norm, |r| r.gc_sq_norm);
    let pert = compute_perturbation(&ascent, cfg)?;

    let perturbed = params.offset(&pert.eps, 1.0)?;
    let (loss_perturbed, adv) = oracle.loss_and_grad(&perturbed, batch)?;

    let (descent, descent_report) = if centralize_descent {
        let (g, rep) = centralize_param_set(&adv, &cfg.gc)?;
        (g, Some(rep))
    } else {
        (adv, None)
    };
    base.step(params, &descent, state)?;

    Ok(StepTelemetry {
        step: state.step,
        loss_clean,
        loss_perturbed: Some(loss_perturbed),
        eps_norm: pert.eps_norm,
        orig_sq_norm,
        gc_sq_norm,
        step_wall_ns: elapsed_ns(start),
        oracle_calls: 2,
        ascent_report,
        descent_report,
    })
}

fn elapsed_ns(start: Instant) -> u64 {
    u64::try_from(start.elapsed().as_nanos())
        .unwrap_or(u64::MAX)
        .max(1)
}

/// One SAM step. The centralization switches in `cfg` are ignored.
///
/// `params` is only modified by the final base-optimizer update, so any
/// failure (including at the perturbed point) leaves it untouched.
pub fn sam_step<O: GradientOracle + ?Sized>(
    params: &mut ParamSet,
    batch: &O::Batch,
    oracle: &O,
    base: &BaseOptimizer,
    state: &mut OptimizerState,
    cfg: &SamConfig,
) -> Result<StepTelemetry, OptimError> {
    two_pass_step(params, batch, oracle, base, state, cfg, false, false)
}

/// One GCSAM step, honouring `cfg.centralize_ascent` and `cfg.centralize_descent`.
pub fn gcsam_step<O: GradientOracle + ?Sized>(
    params: &mut ParamSet,
    batch: &O::Batch,
    oracle: &O,
    base: &BaseOptimizer,
    state: &mut OptimizerState,
    cfg: &SamConfig,
) -> Result<StepTelemetry, OptimError> {
    two_pass_step(
        params,
        batch,
        oracle,
        base,
        state,
        cfg,
        cfg.centralize_ascent,
        cfg.centralize_descent,
    )
}

/// One-evaluation step of a base optimizer, with the same telemetry shape.
pub fn base_step<O: GradientOracle + ?Sized>(
    params: &mut ParamSet,
    batch: &O::Batch,
    oracle: &O,
    base: &BaseOptimizer,
    state: &mut OptimizerState,
) -> Result<StepTelemetry, OptimError> {
    let start = Instant::now();
    base.validate()?;
    let (loss_clean, grads) = oracle.loss_and_grad(params, batch)?;
    let sq = grads.global_sq_norm();
    base.step(params, &grads, state)?;
    Ok(StepTelemetry {
        step: state.step,
        loss_clean,
        loss_perturbed: None,
        eps_norm: 0.0,
        orig_sq_norm: sq,
        gc_sq_norm: sq,
        step_wall_ns: elapsed_ns(start),
        oracle_calls: 1,
        ascent_report: None,
        descent_report: None,
    })
}

/// Any supported optimizer, as selected by an experiment config.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd(super::base::SgdConfig),
    Adam(super::base::AdamConfig),
    Sam {
        base: BaseOptimizer,
        sam: SamConfig,
    },
    Gcsam {
        base: BaseOptimizer,
        sam: SamConfig,
    },
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd(_) => "sgd",
            Optimizer::Adam(_) => "adam",
            Optimizer::Sam { .. } => "sam",
            Optimizer::Gcsam { .. } => "gcsam",
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        match self {
            Optimizer::Sgd(c) => c.validate(),
            Optimizer::Adam(c) => c.validate(),
            Optimizer::Sam { base, sam } | Optimizer::Gcsam { base, sam } => {
                base.validate()?;
                sam.validate()
            }
        }
    }

    /// Oracle evaluations per step.
    pub fn oracle_calls_per_step(&self) -> u32 {
        match self {
            Optimizer::Sgd(_) | Optimizer::Adam(_) => 1,
            Optimizer::Sam { .. } | Optimizer::Gcsam { .. } => 2,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::Sgd(c) => c.lr,
            Optimizer::Adam(c) => c.lr,
            Optimizer::Sam { base, .. } | Optimizer::Gcsam { base, .. } => base.lr(),
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            Optimizer::Sam { sam, .. } | Optimizer::Gcsam { sam, .. } => Some(sam.rho),
            _ => None,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            Optimizer::Sgd(c) => Optimizer::Sgd(super::base::SgdConfig { lr, ..c }),
            Optimizer::Adam(c) => Optimizer::Adam(super::base::AdamConfig { lr, ..c }),
            Optimizer::Sam { base, sam } => Optimizer::Sam {
                base: base.with_lr(lr),
                sam,
            },
            Optimizer::Gcsam { base, sam } => Optimizer::Gcsam {
                base: base.with_lr(lr),
                sam,
            },
        }
    }

    /// Sets ρ on sharpness-aware optimizers; no-op for base optimizers.
    pub fn with_rho(self, rho: f64) -> Self {
        match self {
            Optimizer::Sam { base, sam } => Optimizer::Sam {
                base,
                sam: SamConfig { rho, ..sam },
            },
            Optimizer::Gcsam { base, sam } => Optimizer::Gcsam {
                base,
                sam: SamConfig { rho, ..sam },
            },
            other => other,
        }
    }

    pub fn step<O: GradientOracle + ?Sized>(
        &self,
        params: &mut ParamSet,
        batch: &O::Batch,
        oracle: &O,
        state: &mut OptimizerState,
    ) -> Result<StepTelemetry, OptimError> {
        match self {
            Optimizer::Sgd(c) => base_step(params, batch, oracle, &BaseOptimizer::Sgd(*c), state),
            Optimizer::Adam(c) => base_step(params, batch, oracle, &BaseOptimizer::Adam(*c), state),
            Optimizer::Sam { base, sam } => sam_step(params, batch, oracle, base, state, sam),
            Optimizer::Gcsam { base, sam } => gcsam_step(params, batch, oracle, base, state, sam),
        }
    }
}
