//! Asymmetric double-well toy loss for flat-versus-sharp basin experiments.
//!
//! The weight is a 1×2 matrix `(u, v)`. Along `s = (u − v)/√2` the loss is
//! the sum of two inverted Gaussians: a narrow, slightly deeper one at
//! `sharp_center` and a wide one at `flat_center`. Along `t = (u + v)/√2` it
//! is the quadratic `½·κ·t²`. Centralizing the row removes the `t` component,
//! so gradient centralization acts on this loss as a projection onto `s`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, OracleError};
use crate::optim::{GradientOracle, Optimizer, OptimizerState};
use crate::params::{ParamSet, TensorMap};
use crate::rng::{derive_seed, seeded};
use crate::tensor::Tensor;

pub const WEIGHT: &str = "w";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleWell {
    pub sharp_depth: f64,
    pub sharp_center: f64,
    pub sharp_width: f64,
    pub flat_depth: f64,
    pub flat_center: f64,
    pub flat_width: f64,
    /// Curvature `κ` of the transverse quadratic.
    pub transverse: f64,
}

impl DoubleWell {
    /// The frozen toy: the sharp basin is about 5% deeper and 10× narrower.
    pub const STANDARD: DoubleWell = DoubleWell {
        sharp_depth: 0.915,
        sharp_center: 0.0,
        sharp_width: 0.05,
        flat_depth: 1.0,
        flat_center: 1.0,
        flat_width: 0.5,
        transverse: 1.0,
    };

    fn bump(depth: f64, center: f64, width: f64, s: f64) -> (f64, f64) {
        let z = (s - center) / width;
        let e = depth * (-0.5 * z * z).exp();
        (-e, e * z / width)
    }

    /// Loss profile along `s` and its derivative.
    pub fn profile(&self, s: f64) -> (f64, f64) {
        let (a, da) = Self::bump(self.sharp_depth, self.sharp_center, self.sharp_width, s);
        let (b, db) = Self::bump(self.flat_depth, self.flat_center, self.flat_width, s);
        (a + b, da + db)
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.profile(s).0 + 0.5 * self.transverse * t * t
    }

    /// Local maximum of the profile between the two centres, by bisection on
    /// the derivative. Points with larger `s` belong to the flat basin.
    pub fn boundary(&self) -> f64 {
        let (mut lo, mut hi) = (
            self.sharp_center + self.sharp_width,
            self.flat_center - 1e-9,
        );
        // profile rises (derivative > 0) just right of the sharp well
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.profile(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn params(s: f64, t: f64) -> ParamSet {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut p = ParamSet::new();
        p.insert(
            WEIGHT,
            Tensor::new(vec![1, 2], vec![(t + s) * r, (t - s) * r]).expect("1x2"),
        );
        p
    }

    /// `(s, t)` coordinates of a parameter set built by [`DoubleWell::params`].
    pub fn coords(params: &ParamSet) -> Option<(f64, f64)> {
        let w = params.value(WEIGHT)?.data();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        (w.len() == 2).then(|| ((w[0] - w[1]) * r, (w[0] + w[1]) * r))
    }
}

impl GradientOracle for DoubleWell {
    type Batch = ();

    fn loss_and_grad(&self, params: &ParamSet, _: &()) -> Result<(f64, TensorMap), OracleError> {
        let (s, t) = Self::coords(params)
            .ok_or_else(|| OracleError::Failed("double well needs a 1x2 `w`".into()))?;
        let (l, ds) = self.profile(s);
        let dt = self.transverse * t;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut g = TensorMap::new();
        g.insert(
            WEIGHT,
            Tensor::new(vec![1, 2], vec![(ds + dt) * r, (dt - ds) * r]).expect("1x2"),
        );
        Ok((l + 0.5 * self.transverse * t * t, g))
    }
}

/// Dense-grid facts about a double well, used to validate its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WellSurvey {
    pub boundary: f64,
    pub sharp_min: f64,
    pub flat_min: f64,
    /// Sharp-basin depth over flat-basin depth.
    pub depth_ratio: f64,
    pub width_ratio: f64,
    /// Minimizer of the unperturbed loss along `t = 0`.
    pub plain_argmin: f64,
    /// Minimizer over `s` (at `t = 0`) of `max_{‖ε‖≤ρ} L(w + ε)`.
    pub perturbed_argmin: f64,
}

/// Brute force over `s ∈ [lo, hi]` with `cells` points; the ρ-ball is
/// discretized with `radii × angles` points plus its centre.
pub fn survey(
    well: &DoubleWell,
    rho: f64,
    (lo, hi): (f64, f64),
    cells: usize,
    (radii, angles): (usize, usize),
) -> WellSurvey {
    let boundary = well.boundary();
    let xs: Vec<f64> = (0..cells)
        .map(|i| lo + (hi - lo) * i as f64 / (cells - 1) as f64)
        .collect();
    let mut ball = vec![(0.0, 0.0)];
    for r in 1..=radii {
        let rr = rho * r as f64 / radii as f64;
        for a in 0..angles {
            let th = std::f64::consts::TAU * a as f64 / angles as f64;
            ball.push((rr * th.cos(), rr * th.sin()));
        }
    }
    let mut sharp_min = f64::INFINITY;
    let mut flat_min = f64::INFINITY;
    let (mut plain, mut plain_s) = (f64::INFINITY, lo);
    let (mut pert, mut pert_s) = (f64::INFINITY, lo);
    for &s in &xs {
        let l = well.eval(s, 0.0);
        if s < boundary {
            sharp_min = sharp_min.min(l);
        } else {
            flat_min = flat_min.min(l);
        }
        if l < plain {
            (plain, plain_s) = (l, s);
        }
        let worst = ball
            .iter()
            .map(|&(ds, dt)| well.eval(s + ds, dt))
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < pert {
            (pert, pert_s) = (worst, s);
        }
    }
    WellSurvey {
        boundary,
        sharp_min,
        flat_min,
        depth_ratio: sharp_min / flat_min,
        width_ratio: well.flat_width / well.sharp_width,
        plain_argmin: plain_s,
        perturbed_argmin: pert_s,
    }
}

/// Seeded multi-start protocol for the basin-selection experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinProtocol {
    pub inits: usize,
    /// Initial `s` is stratified over this interval, one draw per sub-interval.
    pub s_range: (f64, f64),
    pub t_sigma: f64,
    pub steps: u64,
    pub seed: u64,
}

impl BasinProtocol {
    pub const STANDARD: BasinProtocol = BasinProtocol {
        inits: 50,
        s_range: (-0.35, 0.40),
        t_sigma: 0.3,
        steps: 3000,
        seed: 0,
    };

    pub fn starts(&self) -> Result<Vec<(f64, f64)>, AnalysisError> {
        let (lo, hi) = self.s_range;
        if self.inits == 0 || !(lo < hi) || !(self.t_sigma >= 0.0) {
            return Err(AnalysisError::Invalid("bad basin protocol".into()));
        }
        let mut rng = seeded(derive_seed(self.seed, "double-well-init"));
        let normal = Normal::new(0.0, self.t_sigma).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        let width = (hi - lo) / self.inits as f64;
        Ok((0..self.inits)
            .map(|i| {
                let s = lo + width * (i as f64 + rng.random::<f64>());
                (s, normal.sample(&mut rng))
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinTally {
    pub optimizer: &'static str,
    pub flat: usize,
    pub sharp: usize,
    pub start_s: Vec<f64>,
    pub final_s: Vec<f64>,
}

impl BasinTally {
    pub fn flat_fraction(&self) -> f64 {
        self.flat as f64 / (self.flat + self.sharp) as f64
    }

    pub fn sharp_fraction(&self) -> f64 {
        self.sharp as f64 / (self.flat + self.sharp) as f64
    }
}

/// Trains from every start and counts which side of the ridge each run ends on.
pub fn basin_tally(
    well: &DoubleWell,
    optimizer: &Optimizer,
    protocol: &BasinProtocol,
) -> Result<BasinTally, AnalysisError> {
    optimizer
        .validate()
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let boundary = well.boundary();
    let mut tally = BasinTally {
        optimizer: optimizer.name(),
        flat: 0,
        sharp: 0,
        start_s: Vec::new(),
        final_s: Vec::new(),
    };
    for (s0, t0) in protocol.starts()? {
        let mut p = DoubleWell::params(s0, t0);
        let mut state = OptimizerState::new();
        for _ in 0..protocol.steps {
            optimizer
                .step(&mut p, &(), well, &mut state)
                .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        }
        let (s, _) = DoubleWell::coords(&p).expect("layout kept");
        if s > boundary {
            tally.flat += 1;
        } else {
            tally.sharp += 1;
        }
        tally.start_s.push(s0);
        tally.final_s.push(s);
    }
    Ok(tally)
}
