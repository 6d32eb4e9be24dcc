//! Gradient centralization: per-column mean removal for weight gradients.
//!
//! Each weight tensor is sliced into columns of `n` elements, and every
//! column `g` is replaced by `g - mean(g)`. This is the orthogonal projection
//! `P = I - e eᵀ` with `e = 1/√n`, applied without ever forming `P`.
//!
//! Column layout is selected by [`ColumnAxis`]. The default, `FanIn`, takes
//! one column per output unit: for a `(fan_out, fan_in)` matrix each row is a
//! column of `fan_in` elements, and for higher-rank tensors all trailing axes
//! are flattened into the column.
//!
//! The projection satisfies `‖Pg‖² = ‖g‖² - n·μ²` per column, which the
//! reports expose so callers can check it.

use serde::{Deserialize, Serialize};

use crate::error::GcError;
use crate::params::TensorMap;
use crate::tensor::{lane_sum, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnAxis {
    /// One column per index of axis 0, spanning all remaining axes.
    FanIn,
    /// Columns are the fibres along this single axis.
    Axis(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcConfig {
    pub enabled: bool,
    pub min_rank: usize,
    pub column_axis: ColumnAxis,
}

impl Default for GcConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            min_rank: 2,
            column_axis: ColumnAxis::FanIn,
        }
    }
}

impl GcConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GcError> {
        if self.min_rank < 1 {
            return Err(GcError::InvalidMinRank);
        }
        Ok(())
    }

    /// Whether a tensor of this rank is centralized under this config.
    pub fn applies_to(&self, rank: usize) -> bool {
        self.enabled && rank >= self.min_rank
    }
}

/// Norm bookkeeping for one centralized tensor.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CentralizationReport {
    /// ‖g‖²
    pub orig_sq_norm: f64,
    /// ‖g_GC‖², summed from the centralized values.
    pub gc_sq_norm: f64,
    /// Σ over columns of n·μ².
    pub removed_sq_norm: f64,
    #[serde(skip)]
    pub column_means: Vec<f64>,
    #[serde(skip)]
    pub column_len: usize,
}

/// Column geometry: `outer * inner` columns of `n` elements spaced `inner` apart.
#[derive(Clone, Copy, Debug)]
struct Columns {
    outer: usize,
    n: usize,
    inner: usize,
}

impl Columns {
    fn for_tensor(shape: &[usize], axis: ColumnAxis) -> Result<Self, GcError> {
        let rank = shape.len();
        match axis {
            ColumnAxis::FanIn => {
                if rank == 0 {
                    return Err(GcError::InvalidAxis { axis: 0, rank });
                }
                Ok(Self {
                    outer: shape[0],
                    n: shape[1..].iter().product(),
                    inner: 1,
                })
            }
            ColumnAxis::Axis(k) => {
                if k >= rank {
                    return Err(GcError::InvalidAxis { axis: k, rank });
                }
                Ok(Self {
                    outer: shape[..k].iter().product(),
                    n: shape[k],
                    inner: shape[k + 1..].iter().product(),
                })
            }
        }
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        // f(start, stride) for each column
        let block = self.n * self.inner;
        for o in 0..self.outer {
            for i in 0..self.inner {
                f(o * block + i, self.inner);
            }
        }
    }
}

/// Mean with a shift by the first element; exact for constant columns.
fn shifted_mean(data: &[f64], start: usize, stride: usize, n: usize) -> f64 {
    let x0 = data[start];
    if stride == 1 {
        return x0 + lane_sum(&data[start + 1..start + n], |v| v - x0) / n as f64;
    }
    let mut acc = 0.0;
    for j in 1..n {
        acc += data[start + j * stride] - x0;
    }
    x0 + acc / n as f64
}

fn check_finite(t: &Tensor) -> Result<(), GcError> {
    match t.data().iter().position(|v| !v.is_finite()) {
        Some(index) => Err(GcError::NonFinite { index }),
        None => Ok(()),
    }
}

/// `‖t‖²`, failing on the first non-finite element.
fn finite_sq_norm(t: &Tensor) -> Result<f64, GcError> {
    let sq = lane_sum(t.data(), |v| v * v);
    if !sq.is_finite() {
        check_finite(t)?;
    }
    Ok(sq)
}

/// Centralizes every column of `grad`.
///
/// Tensors below `cfg.min_rank` are refused; route them around this function
/// (as [`centralize_param_set`] does for biases). With `cfg.enabled == false`
/// the input is returned unchanged.
pub fn centralize_matrix(
    grad: &Tensor,
    cfg: &GcConfig,
) -> Result<(Tensor, CentralizationReport), GcError> {
    cfg.validate()?;
    let orig_sq_norm = finite_sq_norm(grad)?;
    if !cfg.enabled {
        let report = CentralizationReport {
            orig_sq_norm,
            gc_sq_norm: orig_sq_norm,
            ..Default::default()
        };
        return Ok((grad.clone(), report));
    }
    if grad.rank() < cfg.min_rank {
        return Err(GcError::RankBelowMinimum {
            rank: grad.rank(),
            min_rank: cfg.min_rank,
        });
    }
    let cols = Columns::for_tensor(grad.shape(), cfg.column_axis)?;
    let mut out = grad.clone();
    let mut means = Vec::with_capacity(cols.outer * cols.inner);
    let mut removed = 0.0;
    if cols.n > 0 {
        let data = out.data_mut();
        cols.for_each(|start, stride| {
            let mu = shifted_mean(data, start, stride, cols.n);
            for j in 0..cols.n {
                data[start + j * stride] -= mu;
            }
            removed += cols.n as f64 * mu * mu;
            means.push(mu);
        });
    }
    let report = CentralizationReport {
        orig_sq_norm,
        gc_sq_norm: lane_sum(out.data(), |v| v * v),
        removed_sq_norm: removed,
        column_means: means,
        column_len: cols.n,
    };
    Ok((out, report))
}

/// Per-tensor and summed centralization norms for a gradient set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AggregateReport {
    pub orig_sq_norm: f64,
    pub gc_sq_norm: f64,
    pub removed_sq_norm: f64,
    /// Entries only for tensors that were centralized.
    pub tensors: Vec<(String, CentralizationReport)>,
}

/// Centralizes every gradient whose rank reaches `cfg.min_rank`; the rest
/// (biases) pass through. Aggregate norms cover all tensors.
pub fn centralize_param_set(
    grads: &TensorMap,
    cfg: &GcConfig,
) -> Result<(TensorMap, AggregateReport), GcError> {
    cfg.validate()?;
    let mut agg = AggregateReport::default();
    let mut out = TensorMap::new();
    for (name, g) in grads.iter() {
        let wrap = |source| GcError::InTensor {
            name: name.to_string(),
            source: Box::new(source),
        };
        if cfg.applies_to(g.rank()) {
            let (c, rep) = centralize_matrix(g, cfg).map_err(wrap)?;
            agg.orig_sq_norm += rep.orig_sq_norm;
            agg.gc_sq_norm += rep.gc_sq_norm;
            agg.removed_sq_norm += rep.removed_sq_norm;
            agg.tensors.push((name.to_string(), rep));
            out.insert(name, c);
        } else {
            let sq = finite_sq_norm(g).map_err(wrap)?;
            agg.orig_sq_norm += sq;
            agg.gc_sq_norm += sq;
            out.insert(name, g.clone());
        }
    }
    Ok((out, agg))
}

/// `‖C(C(g)) - C(g)‖∞`, where `C` is [`centralize_matrix`].
pub fn projection_idempotence_residual(grad: &Tensor, cfg: &GcConfig) -> Result<f64, GcError> {
    let (once, _) = centralize_matrix(grad, cfg)?;
    let (twice, _) = centralize_matrix(&once, cfg)?;
    Ok(twice
        .max_abs_diff(&once)
        .expect("centralization preserves shape"))
}
