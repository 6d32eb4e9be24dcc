//! Central finite differences as an independent gradient oracle.

use serde::Serialize;
use thiserror::Error;

use crate::error::OracleError;
use crate::params::{ParamSet, TensorMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FiniteDiffError {
    #[error("step h must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite loss {loss} when perturbing `{name}`[{index}]")]
    NonFinite {
        name: String,
        index: usize,
        loss: f64,
    },
    #[error("loss evaluation failed at `{name}`[{index}]: {source}")]
    Oracle {
        name: String,
        index: usize,
        #[source]
        source: OracleError,
    },
}

/// Coordinate where forward and backward one-sided differences disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonsmoothPoint {
    pub name: String,
    pub index: usize,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    pub grads: TensorMap,
    pub nonsmooth: Vec<NonsmoothPoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct FiniteDiff {
    pub h: f64,
    /// One-sided slopes differing by more than this (relative to
    /// `max(1, |slope|)`) mark a coordinate as nonsmooth.
    pub kink_tolerance: f64,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        Self {
            h: 1e-6,
            kink_tolerance: 1e-3,
        }
    }
}

/// `(L(w + h e_i) - L(w - h e_i)) / 2h` for every coordinate of every parameter.
pub fn finite_diff_gradient<F>(
    loss: F,
    params: &ParamSet,
    fd: FiniteDiff,
) -> Result<FiniteDiffReport, FiniteDiffError>
where
    F: Fn(&ParamSet) -> Result<f64, OracleError>,
{
    if !(fd.h > 0.0 && fd.h.is_finite()) {
        return Err(FiniteDiffError::InvalidStep(fd.h));
    }
    let eval = |p: &ParamSet, name: &str, index: usize| -> Result<f64, FiniteDiffError> {
        let v = loss(p).map_err(|source| FiniteDiffError::Oracle {
            name: name.to_string(),
            index,
            source,
        })?;
        if !v.is_finite() {
            return Err(FiniteDiffError::NonFinite {
                name: name.to_string(),
                index,
                loss: v,
            });
        }
        Ok(v)
    };

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let center = eval(params, names.first().map_or("", String::as_str), 0)?;
    let mut work = params.clone();
    let mut grads = params.values().zeros_like();
    let mut nonsmooth = Vec::new();

    for name in &names {
        let n = params.value(name).map_or(0, |t| t.len());
        for i in 0..n {
            let orig = params.value(name).expect("name from params").data()[i];
            work.value_mut(name).expect("cloned").data_mut()[i] = orig + fd.h;
            let plus = eval(&work, name, i)?;
            work.value_mut(name).expect("cloned").data_mut()[i] = orig - fd.h;
            let minus = eval(&work, name, i)?;
            work.value_mut(name).expect("cloned").data_mut()[i] = orig;

            let forward = (plus - center) / fd.h;
            let backward = (center - minus) / fd.h;
            let scale = 1f64.max(forward.abs()).max(backward.abs());
            if (forward - backward).abs() > fd.kink_tolerance * scale {
                nonsmooth.push(NonsmoothPoint {
                    name: name.clone(),
                    index: i,
                    forward,
                    backward,
                });
            }
            grads.get_mut(name).expect("same layout").data_mut()[i] =
                (plus - minus) / (2.0 * fd.h);
        }
    }
    Ok(FiniteDiffReport { grads, nonsmooth })
}

/// Coordinate-wise agreement between two gradient estimates.
#[derive(Debug, Clone, Serialize)]
pub struct GradientAgreement {
    pub max_abs_error: f64,
    /// Largest relative error among coordinates not already within the absolute floor.
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// A coordinate passes when `|a - b| <= max(rel_tol * max(|a|, |b|), abs_floor)`.
pub fn compare_gradients(
    analytic: &TensorMap,
    numeric: &TensorMap,
    rel_tol: f64,
    abs_floor: f64,
) -> GradientAgreement {
    let mut out = GradientAgreement {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    for (name, a) in analytic.iter() {
        let Some(b) = numeric.get(name) else {
            out.passed = false;
            out.worst = Some((name.to_string(), 0));
            continue;
        };
        if a.shape() != b.shape() {
            out.passed = false;
            out.worst = Some((name.to_string(), 0));
            continue;
        }
        for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
            let err = (x - y).abs();
            out.max_abs_error = out.max_abs_error.max(err);
            if err <= abs_floor {
                continue;
            }
            let rel = err / x.abs().max(y.abs());
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = Some((name.to_string(), i));
            }
            if rel > rel_tol {
                out.passed = false;
            }
        }
    }
    out
}
