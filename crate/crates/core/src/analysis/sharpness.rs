use serde::{Deserialize, Serialize};

use super::{gaussian_like, shifted};
use crate::error::{AnalysisError, OracleError};
use crate::optim::GradientOracle;
use crate::params::ParamSet;
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessConfig {
    pub rho: f64,
    pub num_directions: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl SharpnessConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(AnalysisError::Invalid(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.num_directions == 0 {
            return Err(AnalysisError::Invalid("num_directions must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionRecord {
    /// Loss gap at the random starting point `ρ·u`.
    pub initial_gap: f64,
    /// Largest gap seen along this direction's refinements.
    pub best_gap: f64,
    /// Refinements actually taken (fewer if the gradient vanished).
    pub steps_taken: usize,
}

/// Lower estimate of `max_{‖ε‖ ≤ ρ} L(w + ε) − L(w)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpnessEstimate {
    pub rho: f64,
    pub num_random_directions: usize,
    pub ascent_steps: usize,
    pub seed: u64,
    pub base_loss: f64,
    pub estimate: f64,
    pub directions: Vec<DirectionRecord>,
    /// Set when an oracle call failed; `estimate` then covers only `directions`.
    pub partial: bool,
    pub error: Option<String>,
}

const GRAD_TOLERANCE: f64 = 1e-12;

fn finite(l: f64) -> Result<f64, OracleError> {
    if l.is_finite() {
        Ok(l)
    } else {
        Err(OracleError::NonFiniteLoss(l))
    }
}

/// Random restarts on the ρ-sphere followed by normalized-gradient refinements.
///
/// Each refinement replaces `ε` with `ρ·∇L(w+ε)/‖∇L(w+ε)‖`, the maximizer of
/// the local linearization over the ball. Every visited point is a candidate,
/// so the estimate never exceeds the true ball maximum.
pub fn estimate_sharpness<O: GradientOracle>(
    oracle: &O,
    params: &ParamSet,
    batch: &O::Batch,
    cfg: &SharpnessConfig,
) -> Result<SharpnessEstimate, AnalysisError> {
    cfg.validate()?;
    if params.is_empty() {
        return Err(AnalysisError::Invalid("parameter set is empty".into()));
    }
    let base_loss = finite(oracle.loss(params, batch)?)?;
    let mut rng = seeded(derive_seed(cfg.seed, "sharpness"));
    let mut out = SharpnessEstimate {
        rho: cfg.rho,
        num_random_directions: cfg.num_directions,
        ascent_steps: cfg.ascent_steps,
        seed: cfg.seed,
        base_loss,
        estimate: f64::NEG_INFINITY,
        directions: Vec::with_capacity(cfg.num_directions),
        partial: false,
        error: None,
    };

    for _ in 0..cfg.num_directions {
        let u = gaussian_like(params, &mut rng);
        let n = u.global_norm();
        let mut eps = u.scale(cfg.rho / n);
        let mut record = DirectionRecord {
            initial_gap: f64::NAN,
            best_gap: f64::NEG_INFINITY,
            steps_taken: 0,
        };
        let result = (|| -> Result<(), AnalysisError> {
            for step in 0..=cfg.ascent_steps {
                let point = shifted(params, &eps, 1.0)?;
                let refine = step < cfg.ascent_steps;
                let (loss, grad) = if refine {
                    let (l, g) = oracle.loss_and_grad(&point, batch)?;
                    (l, Some(g))
                } else {
                    (oracle.loss(&point, batch)?, None)
                };
                let gap = finite(loss)? - base_loss;
                if step == 0 {
                    record.initial_gap = gap;
                }
                record.best_gap = record.best_gap.max(gap);
                let Some(g) = grad else { break };
                let gn = g.global_norm();
                if !(gn > GRAD_TOLERANCE) {
                    break;
                }
                eps = g.scale(cfg.rho / gn);
                record.steps_taken += 1;
            }
            Ok(())
        })();
        if let Err(e) = result {
            if record.best_gap.is_finite() {
                out.estimate = out.estimate.max(record.best_gap);
                out.directions.push(record);
            }
            out.partial = true;
            out.error = Some(e.to_string());
            break;
        }
        out.estimate = out.estimate.max(record.best_gap);
        out.directions.push(record);
    }
    Ok(out)
}
