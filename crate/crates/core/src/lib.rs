//! Gradient-centralized sharpness-aware minimization (GCSAM) and friends.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`tape`]: dense `f64` tensors and a reverse-mode tape.
//! * [`params`]: named parameter and gradient collections.
//! * [`gradcheck`]: central finite differences for checking gradients.
//! * [`centralization`]: per-column gradient mean removal.
//! * [`optim`]: SGD, Adam, SAM and GCSAM steps.
//! * [`models`]: small MLPs acting as gradient oracles.
//! * [`data`]: synthetic datasets, CSV ingestion and batching.
//! * [`analysis`]: sharpness estimates, loss landscapes, the PAC-Bayes bound
//!   and a two-basin toy surface.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod centralization;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod models;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{AnalysisError, DataError, EngineError, GcError, OptimError, OracleError};
pub use params::{Param, ParamSet, TensorMap};
pub use tensor::Tensor;
