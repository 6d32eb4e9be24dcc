//! Base optimizers and the sharpness-aware wrappers built on them.

mod base;
mod oracle;
mod sam;

pub use base::{
    adam_step, sgd_step, AdamConfig, BaseOptimizer, OptimizerState, SgdConfig, Slot,
};
pub use oracle::{CountingOracle, FnOracle, GradientOracle};
pub use sam::{
    base_step, compute_perturbation, gcsam_step, sam_step, Optimizer, Perturbation, SamConfig,
    StepTelemetry,
};
