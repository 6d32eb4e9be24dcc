//! Fully connected networks used as gradient oracles.
//!
//! Layer `l` holds `fc{l}.weight` with shape `(fan_out, fan_in)` and
//! `fc{l}.bias` with shape `(fan_out)`. Hidden layers apply the configured
//! activation; the output layer is linear. Losses are minibatch means.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Batch, Dataset, Targets};
use crate::error::{EngineError, OracleError};
use crate::optim::GradientOracle;
use crate::params::{ParamSet, TensorMap};
use crate::rng::seeded;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxXent,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `U(-b, b)` with `b = √(6 / (fan_in + fan_out))`.
    GlorotUniform,
    /// `U(-b, b)` with `b = √(6 / fan_in)`.
    HeUniform,
}

impl Init {
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Init::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
    pub init: Init,
    pub seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(EngineError::RankMismatch {
                op: "mlp layer_sizes (need >= 2 positive sizes)",
                expected: 2,
                shape: self.layer_sizes.clone(),
            });
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn weight_name(layer: usize) -> String {
        format!("fc{layer}.weight")
    }

    pub fn bias_name(layer: usize) -> String {
        format!("fc{layer}.bias")
    }

    /// Expected `(name, shape)` of every parameter, in order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layer_sizes
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    (Self::weight_name(l), vec![w[1], w[0]]),
                    (Self::bias_name(l), vec![w[1]]),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Hex SHA-256 of the architecture, stored in checkpoints.
    ///
    /// The init seed is left out: a checkpoint fits any spec that differs
    /// only in how it was initialized.
    pub fn fingerprint(&self) -> String {
        let arch = MlpSpec { seed: 0, ..self.clone() };
        let json = serde_json::to_vec(&arch).expect("spec serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<(), EngineError> {
        let expected = self.param_shapes();
        if params.len() != expected.len() {
            return Err(EngineError::ShapeMismatch {
                op: "mlp parameter count",
                lhs: vec![expected.len()],
                rhs: vec![params.len()],
            });
        }
        for (name, shape) in expected {
            let value = params.value(&name).ok_or(EngineError::ShapeMismatch {
                op: "mlp parameter missing",
                lhs: shape.clone(),
                rhs: Vec::new(),
            })?;
            if value.shape() != shape.as_slice() {
                return Err(EngineError::ShapeMismatch {
                    op: "mlp parameter shape",
                    lhs: shape,
                    rhs: value.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Seeded initialization: uniform weights, zero biases.
pub fn init_params(spec: &MlpSpec) -> Result<ParamSet, EngineError> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let mut params = ParamSet::new();
    for (l, w) in spec.layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = spec.init.bound(fan_in, fan_out);
        let dist = Uniform::new(-bound, bound).expect("positive bound");
        let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
        params.insert(MlpSpec::weight_name(l), Tensor::new(vec![fan_out, fan_in], data)?);
        params.insert(MlpSpec::bias_name(l), Tensor::zeros(&[fan_out]));
    }
    Ok(params)
}

struct Forward {
    tape: Tape,
    leaves: Vec<(String, Var)>,
    output: Var,
    pre_activations: Vec<Var>,
}

fn forward(spec: &MlpSpec, params: &ParamSet, features: &Tensor) -> Result<Forward, EngineError> {
    spec.validate()?;
    spec.check_params(params)?;
    if features.rank() != 2 || features.cols() != spec.input_width() {
        return Err(EngineError::ShapeMismatch {
            op: "mlp input",
            lhs: vec![features.rows(), spec.input_width()],
            rhs: features.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let mut leaves = Vec::with_capacity(2 * spec.num_layers());
    let mut pre_activations = Vec::new();
    let mut h = tape.constant(features.clone());
    for l in 0..spec.num_layers() {
        let wn = MlpSpec::weight_name(l);
        let bn = MlpSpec::bias_name(l);
        let w = tape.leaf(params.value(&wn).expect("checked").clone());
        let b = tape.leaf(params.value(&bn).expect("checked").clone());
        leaves.push((wn, w));
        leaves.push((bn, b));
        let wt = tape.transpose(w)?;
        let z = tape.matmul(h, wt)?;
        let z = tape.add_bias(z, b)?;
        h = if l + 1 < spec.num_layers() {
            pre_activations.push(z);
            match spec.activation {
                Activation::Relu => tape.relu(z)?,
                Activation::Tanh => tape.tanh(z)?,
            }
        } else {
            z
        };
    }
    Ok(Forward {
        tape,
        leaves,
        output: h,
        pre_activations,
    })
}

fn attach_loss(
    spec: &MlpSpec,
    tape: &mut Tape,
    output: Var,
    targets: &Targets,
) -> Result<Var, EngineError> {
    let rows = tape.value(output)?.rows();
    if targets.len() != rows {
        return Err(EngineError::LabelCount {
            op: "mlp loss",
            rows,
            found: targets.len(),
        });
    }
    match (spec.loss, targets) {
        (LossKind::SoftmaxXent, Targets::Classes(labels)) => {
            tape.softmax_cross_entropy(output, labels)
        }
        (LossKind::SoftmaxXent, Targets::Values(t)) => Err(EngineError::ShapeMismatch {
            op: "softmax_xent needs class labels",
            lhs: vec![rows],
            rhs: t.shape().to_vec(),
        }),
        (LossKind::Mse, Targets::Classes(labels)) => {
            let k = spec.output_width();
            let mut onehot = Tensor::zeros(&[rows, k]);
            for (i, &y) in labels.iter().enumerate() {
                if y >= k {
                    return Err(EngineError::InvalidLabel {
                        row: i,
                        label: y,
                        num_classes: k,
                    });
                }
                onehot.data_mut()[i * k + y] = 1.0;
            }
            tape.mse(output, &onehot)
        }
        (LossKind::Mse, Targets::Values(t)) => tape.mse(output, t),
    }
}

/// Network outputs (logits for classification) for each row of `features`.
pub fn predict(spec: &MlpSpec, params: &ParamSet, features: &Tensor) -> Result<Tensor, EngineError> {
    let f = forward(spec, params, features)?;
    Ok(f.tape.value(f.output)?.clone())
}

/// Hidden-layer pre-activations, used to keep gradient checks away from ReLU kinks.
pub fn pre_activations(
    spec: &MlpSpec,
    params: &ParamSet,
    features: &Tensor,
) -> Result<Vec<Tensor>, EngineError> {
    let f = forward(spec, params, features)?;
    f.pre_activations
        .iter()
        .map(|&v| f.tape.value(v).cloned())
        .collect()
}

/// Mean minibatch loss and its exact gradient.
pub fn loss_and_grad(
    spec: &MlpSpec,
    params: &ParamSet,
    batch: &Batch,
) -> Result<(f64, TensorMap), EngineError> {
    let mut f = forward(spec, params, &batch.features)?;
    let loss = attach_loss(spec, &mut f.tape, f.output, &batch.targets)?;
    let value = f.tape.value(loss)?.data()[0];
    let mut grads = f.tape.backward(loss, 1.0)?;
    let map = f
        .leaves
        .into_iter()
        .map(|(name, v)| (name, grads.take(v).expect("leaf on tape")))
        .collect();
    Ok((value, map))
}

pub fn loss(spec: &MlpSpec, params: &ParamSet, batch: &Batch) -> Result<f64, EngineError> {
    let mut f = forward(spec, params, &batch.features)?;
    let loss = attach_loss(spec, &mut f.tape, f.output, &batch.targets)?;
    Ok(f.tape.value(loss)?.data()[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub mean_loss: f64,
    /// Fraction of rows whose argmax output matches the label; classification only.
    pub accuracy: Option<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Full-dataset loss and accuracy, without gradients.
pub fn evaluate(spec: &MlpSpec, params: &ParamSet, ds: &Dataset) -> Result<Evaluation, EngineError> {
    if ds.is_empty() {
        return Err(EngineError::LabelCount {
            op: "evaluate on empty dataset",
            rows: 0,
            found: 0,
        });
    }
    let mut f = forward(spec, params, &ds.data.features)?;
    let loss_var = attach_loss(spec, &mut f.tape, f.output, &ds.data.targets)?;
    let mean_loss = f.tape.value(loss_var)?.data()[0];
    let accuracy = match &ds.data.targets {
        Targets::Classes(labels) => {
            let out = f.tape.value(f.output)?;
            let hits = labels
                .iter()
                .enumerate()
                .filter(|(i, &y)| argmax(out.row(*i)) == y)
                .count();
            Some(hits as f64 / labels.len() as f64)
        }
        Targets::Values(_) => None,
    };
    Ok(Evaluation {
        mean_loss,
        accuracy,
    })
}

/// [`GradientOracle`] over minibatches for a fixed network spec.
#[derive(Clone, Debug)]
pub struct MlpOracle {
    pub spec: MlpSpec,
}

impl MlpOracle {
    pub fn new(spec: MlpSpec) -> Self {
        Self { spec }
    }
}

impl GradientOracle for MlpOracle {
    type Batch = Batch;

    fn loss_and_grad(
        &self,
        params: &ParamSet,
        batch: &Batch,
    ) -> Result<(f64, TensorMap), OracleError> {
        let (l, g) = loss_and_grad(&self.spec, params, batch)?;
        if !l.is_finite() {
            return Err(OracleError::NonFiniteLoss(l));
        }
        Ok((l, g))
    }

    fn loss(&self, params: &ParamSet, batch: &Batch) -> Result<f64, OracleError> {
        Ok(loss(&self.spec, params, batch)?)
    }
}
