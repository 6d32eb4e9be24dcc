use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{gaussian_like, shifted};
use crate::error::{AnalysisError, OracleError};
use crate::optim::GradientOracle;
use crate::params::{ParamSet, TensorMap};
use crate::rng::{derive_seed, seeded};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Both directions have unit global norm.
    Raw,
    /// Each weight tensor of each direction has unit norm; tensors of rank
    /// below 2 (biases) are left at zero.
    PerLayer,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Directions {
    pub d1: TensorMap,
    pub d2: TensorMap,
    pub seed: u64,
    pub normalization: Normalization,
    /// True when the first draw was degenerate and a second seed was used.
    pub reseeded: bool,
}

// Residual below this fraction of the raw norm counts as parallel.
const PARALLEL_TOLERANCE: f64 = 1e-8;

/// Orthonormalizes `b` against unit `a` in place (two Gram-Schmidt passes).
/// Returns false if `b` was (nearly) parallel to `a`.
fn orthonormalize(a: &[f64], b: &mut [f64]) -> bool {
    let raw: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..2 {
        let c: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        for (y, x) in b.iter_mut().zip(a) {
            *y -= c * x;
        }
    }
    let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > PARALLEL_TOLERANCE * raw) {
        return false;
    }
    b.iter_mut().for_each(|y| *y /= n);
    true
}

fn flatten(m: &TensorMap) -> Vec<f64> {
    m.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
}

fn unflatten(like: &TensorMap, flat: &[f64]) -> TensorMap {
    let mut at = 0;
    like.iter()
        .map(|(name, t)| {
            let n = t.len();
            let piece = Tensor::new(t.shape().to_vec(), flat[at..at + n].to_vec()).expect("same shape");
            at += n;
            (name.to_string(), piece)
        })
        .collect()
}

fn draw(
    params: &ParamSet,
    seed: u64,
    normalization: Normalization,
) -> Result<Option<(TensorMap, TensorMap)>, AnalysisError> {
    let mut rng = seeded(seed);
    let g1 = gaussian_like(params, &mut rng);
    let g2 = gaussian_like(params, &mut rng);
    match normalization {
        Normalization::Raw => {
            let mut a = flatten(&g1);
            let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0) {
                return Ok(None);
            }
            a.iter_mut().for_each(|x| *x /= n);
            let mut b = flatten(&g2);
            if !orthonormalize(&a, &mut b) {
                return Ok(None);
            }
            Ok(Some((unflatten(&g1, &a), unflatten(&g2, &b))))
        }
        Normalization::PerLayer => {
            let mut d1 = TensorMap::new();
            let mut d2 = TensorMap::new();
            let mut any = false;
            for ((name, t1), (_, t2)) in g1.iter().zip(g2.iter()) {
                if t1.rank() < 2 || t1.len() < 2 {
                    d1.insert(name, Tensor::zeros(t1.shape()));
                    d2.insert(name, Tensor::zeros(t2.shape()));
                    continue;
                }
                any = true;
                let n = t1.sq_norm().sqrt();
                let a = t1.scale(1.0 / n);
                let mut b = t2.clone();
                if !orthonormalize(a.data(), b.data_mut()) {
                    return Ok(None);
                }
                d1.insert(name, a);
                d2.insert(name, b);
            }
            if !any {
                return Err(AnalysisError::Invalid(
                    "per_layer normalization needs a weight tensor with rank >= 2 and >= 2 elements"
                        .into(),
                ));
            }
            Ok(Some((d1, d2)))
        }
    }
}

/// Two seeded Gaussian directions, the second orthogonalized against the first.
pub fn orthogonal_gaussian_directions(
    params: &ParamSet,
    seed: u64,
    normalization: Normalization,
) -> Result<Directions, AnalysisError> {
    if params.numel() < 2 {
        return Err(AnalysisError::Invalid(
            "need at least two scalar parameters for two orthogonal directions".into(),
        ));
    }
    for (reseeded, s) in [(false, seed), (true, derive_seed(seed, "landscape-reseed"))] {
        if let Some((d1, d2)) = draw(params, s, normalization)? {
            return Ok(Directions {
                d1,
                d2,
                seed,
                normalization,
                reseeded,
            });
        }
    }
    Err(AnalysisError::DegenerateDirections)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.steps < 2 {
            return Err(AnalysisError::Invalid(format!(
                "axis needs >= 2 steps, got {}",
                self.steps
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(AnalysisError::Invalid(format!(
                "axis range [{}, {}] is empty or non-finite",
                self.min, self.max
            )));
        }
        if !self.coords().contains(&0.0) {
            return Err(AnalysisError::Invalid(format!(
                "axis [{}, {}] with {} steps does not include 0",
                self.min, self.max, self.steps
            )));
        }
        Ok(())
    }

    /// Evenly spaced coordinates; values within rounding of zero snap to 0.
    pub fn coords(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        let span = self.max - self.min;
        (0..self.steps)
            .map(|i| {
                let i = i as f64;
                let c = (self.min * (last - i) + self.max * i) / last;
                if c.abs() <= 1e-12 * span {
                    0.0
                } else {
                    c
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: GridAxis,
    pub b: GridAxis,
}

impl GridSpec {
    pub fn square(min: f64, max: f64, steps: usize) -> Self {
        let axis = GridAxis { min, max, steps };
        Self { a: axis, b: axis }
    }
}

/// Loss over the slice `w + a·d₁ + b·d₂`, stored row-major with `a` outer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandscapeGrid {
    pub spec: GridSpec,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub losses: Vec<f64>,
    pub base_loss: f64,
    pub directions: Directions,
}

impl LandscapeGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.losses[i * self.b.len() + j]
    }

    /// Index pair of the `(0, 0)` cell.
    pub fn center(&self) -> (usize, usize) {
        let i = self.a.iter().position(|&c| c == 0.0).expect("validated axis");
        let j = self.b.iter().position(|&c| c == 0.0).expect("validated axis");
        (i, j)
    }

    /// `a,b,loss` rows with 17 significant digits; non-finite losses print as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("a,b,loss\n");
        for (i, a) in self.a.iter().enumerate() {
            for (j, b) in self.b.iter().enumerate() {
                let l = self.get(i, j);
                if l.is_finite() {
                    writeln!(s, "{a:.16e},{b:.16e},{l:.16e}").unwrap();
                } else {
                    writeln!(s, "{a:.16e},{b:.16e},NaN").unwrap();
                }
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Evaluates the loss on every grid cell over one fixed batch.
///
/// The centre cell reuses the base evaluation, so it equals `L(w)` bitwise.
/// Cells where the loss is non-finite are stored as NaN.
pub fn sample_landscape<O: GradientOracle>(
    oracle: &O,
    params: &ParamSet,
    spec: &GridSpec,
    directions: &Directions,
    batch: &O::Batch,
) -> Result<LandscapeGrid, AnalysisError> {
    spec.a.validate()?;
    spec.b.validate()?;
    params
        .check_layout(&directions.d1)
        .and_then(|_| params.check_layout(&directions.d2))
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let base_loss = oracle.loss(params, batch)?;
    let a = spec.a.coords();
    let b = spec.b.coords();
    let mut losses = Vec::with_capacity(a.len() * b.len());
    for &ca in &a {
        let row = shifted(params, &directions.d1, ca)?;
        for &cb in &b {
            if ca == 0.0 && cb == 0.0 {
                losses.push(base_loss);
                continue;
            }
            let point = shifted(&row, &directions.d2, cb)?;
            let l = match oracle.loss(&point, batch) {
                Ok(l) if l.is_finite() => l,
                Ok(_) | Err(OracleError::NonFiniteLoss(_)) => f64::NAN,
                Err(e) => return Err(e.into()),
            };
            losses.push(l);
        }
    }
    Ok(LandscapeGrid {
        spec: *spec,
        a,
        b,
        losses,
        base_loss,
        directions: directions.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(&[3, 4]));
        p.insert("b", Tensor::zeros(&[3]));
        p
    }

    #[test]
    fn raw_directions_are_orthonormal() {
        let d = orthogonal_gaussian_directions(&params(), 7, Normalization::Raw).unwrap();
        assert!(d.d1.dot(&d.d2).unwrap().abs() <= 1e-12);
        assert!((d.d1.global_norm() - 1.0).abs() <= 1e-12);
        assert!((d.d2.global_norm() - 1.0).abs() <= 1e-12);
        assert!(!d.reseeded);
    }

    #[test]
    fn per_layer_zeroes_biases() {
        let d = orthogonal_gaussian_directions(&params(), 7, Normalization::PerLayer).unwrap();
        assert_eq!(d.d1.get("b").unwrap().max_abs(), 0.0);
        assert!((d.d2.get("w").unwrap().sq_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_layer_needs_a_matrix() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::zeros(&[5]));
        assert!(orthogonal_gaussian_directions(&p, 0, Normalization::PerLayer).is_err());
    }

    #[test]
    fn axis_must_contain_zero() {
        let axis = GridAxis { min: 0.1, max: 1.0, steps: 5 };
        assert!(axis.validate().is_err());
        let even = GridAxis { min: -1.0, max: 1.0, steps: 4 };
        assert!(even.validate().is_err());
        let ok = GridAxis { min: -1.0, max: 1.0, steps: 21 };
        assert_eq!(ok.coords()[10], 0.0);
        assert_eq!(ok.coords()[0], -1.0);
        assert_eq!(ok.coords()[20], 1.0);
    }

    #[test]
    fn parallel_is_detected() {
        let a = [1.0, 0.0];
        let mut b = [3.0, 0.0];
        assert!(!orthonormalize(&a, &mut b));
    }
}
