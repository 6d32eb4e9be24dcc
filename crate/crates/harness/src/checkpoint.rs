//! Checkpoints: named `f64` tensors plus the fingerprint of the model spec.
//!
//! The container is a JSON object:
//!
//! ```json
//! {"format": "gcsam-checkpoint", "version": 1, "spec_hash": "<sha256>",
//!  "model": {...}, "step": 120,
//!  "tensors": [{"name": "fc0.weight", "shape": [16, 2], "data": [...]}]}
//! ```
//!
//! Floats are written with shortest round-trip formatting and read back with
//! `serde_json`'s exact parser, so values survive bit for bit.

use std::fs;
use std::path::Path;

use gcsam::models::MlpSpec;
use gcsam::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const FORMAT: &str = "gcsam-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec_hash: String,
    pub model: MlpSpec,
    pub step: u64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &MlpSpec, params: &ParamSet, step: u64) -> Self {
        let tensors = params
            .iter()
            .map(|(name, p)| NamedTensor {
                name: name.to_string(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            spec_hash: model.fingerprint(),
            model: model.clone(),
            step,
            tensors,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, json).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let ck: Checkpoint = crate::config::load_json(path)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(HarnessError::Validation(format!(
                "{}: not a version {VERSION} {FORMAT} file",
                path.display()
            )));
        }
        Ok(ck)
    }

    /// Rebuilds the parameters after checking them against `spec`.
    ///
    /// Mismatches name the offending tensors.
    pub fn params_for(&self, spec: &MlpSpec) -> Result<ParamSet, HarnessError> {
        let expected = spec.param_shapes();
        let mut problems = Vec::new();
        for (name, shape) in &expected {
            match self.tensors.iter().find(|t| &t.name == name) {
                None => problems.push(format!("`{name}` missing (expected {shape:?})")),
                Some(t) if &t.shape != shape => {
                    problems.push(format!("`{name}` has shape {:?}, expected {shape:?}", t.shape))
                }
                Some(_) => {}
            }
        }
        for t in &self.tensors {
            if !expected.iter().any(|(n, _)| n == &t.name) {
                problems.push(format!("`{}` is not a parameter of this model", t.name));
            }
        }
        if !problems.is_empty() {
            return Err(HarnessError::Validation(format!(
                "checkpoint does not match the model: {}",
                problems.join("; ")
            )));
        }
        if self.spec_hash != spec.fingerprint() {
            return Err(HarnessError::Validation(
                "checkpoint was written for a different model spec (shapes agree; activation, loss or init differ)".into(),
            ));
        }
        let mut params = ParamSet::new();
        for (name, _) in expected {
            let t = self.tensors.iter().find(|t| t.name == name).expect("checked");
            params.insert(name, Tensor::new(t.shape.clone(), t.data.clone())?);
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcsam::models::{init_params, Activation, Init, LossKind};

    fn spec() -> MlpSpec {
        MlpSpec {
            layer_sizes: vec![2, 3, 2],
            activation: Activation::Tanh,
            loss: LossKind::SoftmaxXent,
            init: Init::GlorotUniform,
            seed: 4,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = init_params(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint::new(&spec(), &p, 5).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().params_for(&spec()).unwrap();
        assert!(back.bitwise_eq(&p));
    }

    #[test]
    fn mismatch_names_tensors() {
        let p = init_params(&spec()).unwrap();
        let mut ck = Checkpoint::new(&spec(), &p, 0);
        ck.tensors[0].shape = vec![2, 3];
        ck.tensors.pop();
        let err = ck.params_for(&spec()).unwrap_err().to_string();
        assert!(err.contains("fc0.weight") && err.contains("fc1.bias"), "{err}");
        let other = MlpSpec { activation: Activation::Relu, ..spec() };
        assert!(Checkpoint::new(&spec(), &p, 0).params_for(&other).is_err());
    }
}
