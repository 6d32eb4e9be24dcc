//! Experiment harness for the gcsam toolkit: configs, runs, reports and sweeps.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod error;
pub mod grid;
pub mod landscape;
pub mod run;
pub mod verify;

pub use error::HarnessError;
