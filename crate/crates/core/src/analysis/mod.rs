//! Instruments for inspecting trained weights: a sharpness estimator, a
//! two-direction loss landscape sampler, the PAC-Bayes bound and a
//! double-well toy loss.

mod bound;
pub mod double_well;
mod landscape;
mod sharpness;

pub use bound::{eval_bound, BoundEvaluation, BoundParams, Radius, RadiusSource};
pub use landscape::{
    orthogonal_gaussian_directions, sample_landscape, Directions, GridAxis, GridSpec,
    LandscapeGrid, Normalization,
};
pub use sharpness::{estimate_sharpness, DirectionRecord, SharpnessConfig, SharpnessEstimate};

use rand_distr::{Distribution, StandardNormal};

use crate::error::AnalysisError;
use crate::params::{ParamSet, TensorMap};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Standard normal draw shaped like `params`, in parameter order.
fn gaussian_like(params: &ParamSet, rng: &mut Rng) -> TensorMap {
    params
        .iter()
        .map(|(name, p)| {
            let data = (0..p.value.len())
                .map(|_| StandardNormal.sample(rng))
                .collect();
            let t = Tensor::new(p.value.shape().to_vec(), data).expect("shape from param");
            (name.to_string(), t)
        })
        .collect()
}

fn shifted(params: &ParamSet, delta: &TensorMap, c: f64) -> Result<ParamSet, AnalysisError> {
    params
        .offset(delta, c)
        .map_err(|e| AnalysisError::Invalid(e.to_string()))
}
