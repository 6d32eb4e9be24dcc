use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

/// Perturbation radius, given directly or through the posterior standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    Rho(f64),
    /// `ρ = √k·σ·(1 + √(ln n / k)) / n`.
    Sigma(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSource {
    Direct,
    FromSigma,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Training set size.
    pub n: usize,
    /// Parameter count.
    pub k: usize,
    pub delta: f64,
    /// Prior scale. Deliberately has no default.
    pub eta: f64,
    pub radius: Radius,
    /// Stand-in for the unspecified `O(1)` term.
    #[serde(default)]
    pub constant_term: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: String| Err(AnalysisError::Invalid(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.k < 1 {
            return bad("k must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        let r = match self.radius {
            Radius::Rho(r) | Radius::Sigma(r) => r,
        };
        if !(r.is_finite() && r > 0.0) {
            return bad(format!("radius must be > 0, got {r}"));
        }
        if !self.constant_term.is_finite() {
            return bad("constant_term must be finite".into());
        }
        Ok(())
    }

    fn ln_ratio(&self) -> f64 {
        ((self.n as f64).ln() / self.k as f64).sqrt()
    }

    pub fn rho(&self) -> (f64, RadiusSource) {
        match self.radius {
            Radius::Rho(r) => (r, RadiusSource::Direct),
            Radius::Sigma(s) => {
                let rho = (self.k as f64).sqrt() * s * (1.0 + self.ln_ratio()) / self.n as f64;
                (rho, RadiusSource::FromSigma)
            }
        }
    }
}

/// Bound value and its pieces. The absolute level depends on `constant_term`,
/// so the value is diagnostic only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundEvaluation {
    pub value: f64,
    pub max_perturbed_loss: f64,
    pub complexity: f64,
    pub rho: f64,
    pub radius_source: RadiusSource,
    pub diagnostic: bool,
}

/// `L_max + √((k·ln(1 + ‖w‖²/(η²ρ²)·(1 + √(ln n/k))²) + 4·ln(n/δ) + C) / (n − 1))`.
pub fn eval_bound(
    max_perturbed_loss: f64,
    w_sq_norm: f64,
    bp: &BoundParams,
) -> Result<BoundEvaluation, AnalysisError> {
    bp.validate()?;
    if !max_perturbed_loss.is_finite() {
        return Err(AnalysisError::Invalid(format!(
            "max_perturbed_loss must be finite, got {max_perturbed_loss}"
        )));
    }
    if !(w_sq_norm.is_finite() && w_sq_norm >= 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "w_sq_norm must be finite and >= 0, got {w_sq_norm}"
        )));
    }
    let (rho, radius_source) = bp.rho();
    let n = bp.n as f64;
    let k = bp.k as f64;
    let spread = (1.0 + bp.ln_ratio()).powi(2);
    let log_term = k * (w_sq_norm / (bp.eta * bp.eta * rho * rho) * spread).ln_1p();
    let radicand = (log_term + 4.0 * (n / bp.delta).ln() + bp.constant_term) / (n - 1.0);
    if radicand < 0.0 {
        return Err(AnalysisError::NegativeRadicand(radicand));
    }
    let complexity = radicand.sqrt();
    Ok(BoundEvaluation {
        value: max_perturbed_loss + complexity,
        max_perturbed_loss,
        complexity,
        rho,
        radius_source,
        diagnostic: true,
    })
}
