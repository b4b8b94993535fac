//! Quadratic regression of trail centers against applied field and the
//! conversion to dipole-moment and polarizability changes.

use serde::{Deserialize, Serialize};

use super::linking::Trail;
use super::peaks::median;
use crate::error::{Error, Result};
use crate::linalg;
use crate::stark_model;
use crate::units::LocalFieldPolicy;

/// Fraction below which a term counts as negligible in [`classify_regime`].
pub const REGIME_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Linear,
    Quadratic,
    Mixed,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Linear => "linear",
            Regime::Quadratic => "quadratic",
            Regime::Mixed => "mixed",
        }
    }
}

/// ν(E) = nu0 + a·E + b·E² and the physical parameters it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkFit {
    /// Hz (scan offset)
    pub nu0: f64,
    /// Hz/(V/m)
    pub a: f64,
    /// Hz/(V/m)²
    pub b: f64,
    /// Covariance of (nu0, a, b).
    pub covariance: [[f64; 3]; 3],
    /// D
    pub delta_mu: f64,
    /// Å³ polarizability volume
    pub delta_alpha: f64,
    pub policy: LocalFieldPolicy,
    pub regime: Regime,
    /// Weighted χ²/(n−3); `None` for exactly three points.
    pub reduced_chi2: Option<f64>,
    pub n_points: usize,
    /// Largest |E| in the trail, V/m.
    pub field_span: f64,
}

impl StarkFit {
    /// Center frequency at applied field `field`.
    pub fn frequency_at(&self, field: f64) -> f64 {
        self.nu0 + self.a * field + self.b * field * field
    }
}

/// Weighted least squares on the basis {1, E, E²}.
///
/// Weights are inverse center variances from the line fits; if any variance
/// is missing the fit falls back to unit weights and scales the covariance by
/// the residual variance. The field axis is normalised by its largest
/// magnitude before forming the normal equations.
pub fn fit_stark_trail(trail: &Trail, policy: &LocalFieldPolicy) -> Result<StarkFit> {
    let fields: Vec<f64> = trail.points.iter().map(|p| p.applied_field).collect();
    let centers: Vec<f64> = trail.points.iter().map(|p| p.fit.center).collect();
    let variances: Vec<f64> = trail.points.iter().map(|p| p.fit.covariance[0][0]).collect();
    fit_polynomial(&fields, &centers, &variances, policy)
}

pub(crate) fn fit_polynomial(
    fields: &[f64],
    centers: &[f64],
    variances: &[f64],
    policy: &LocalFieldPolicy,
) -> Result<StarkFit> {
    policy.validate()?;
    let n = fields.len();
    if n < 3 {
        return Err(Error::DegenerateFit(format!("{n} points, need at least 3")));
    }
    if fields.iter().chain(centers).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite trail values".into()));
    }
    let span = fields.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if span == 0.0 {
        return Err(Error::DegenerateFit("all fields are zero".into()));
    }
    let weighted = variances.iter().all(|v| v.is_finite() && *v > 0.0);
    let weights: Vec<f64> = if weighted {
        variances.iter().map(|v| 1.0 / v).collect()
    } else {
        vec![1.0; n]
    };

    let mut normal = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for ((&e, &y), &w) in fields.iter().zip(centers).zip(&weights) {
        let t = e / span;
        let basis = [1.0, t, t * t];
        for i in 0..3 {
            rhs[i] += w * basis[i] * y;
            for j in 0..3 {
                normal[i][j] += w * basis[i] * basis[j];
            }
        }
    }
    const RANK_TOL: f64 = 1e-12;
    let coef = linalg::solve(&normal, &rhs, RANK_TOL)
        .ok_or_else(|| Error::DegenerateFit("design matrix is rank deficient (need 3 distinct fields)".into()))?;
    let inv = linalg::inverse_symmetric(&normal, RANK_TOL)
        .ok_or_else(|| Error::DegenerateFit("normal matrix not invertible".into()))?;

    let chi2: f64 = fields
        .iter()
        .zip(centers)
        .zip(&weights)
        .map(|((&e, &y), &w)| {
            let t = e / span;
            let r = y - (coef[0] + coef[1] * t + coef[2] * t * t);
            w * r * r
        })
        .sum();
    let reduced_chi2 = (n > 3).then(|| chi2 / (n - 3) as f64);
    let cov_scale = if weighted { 1.0 } else { reduced_chi2.unwrap_or(0.0) };

    let unscale = [1.0, 1.0 / span, 1.0 / (span * span)];
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = cov_scale * inv[i][j] * unscale[i] * unscale[j];
        }
    }
    let (nu0, a, b) = (coef[0], coef[1] * unscale[1], coef[2] * unscale[2]);
    let coeffs = stark_model::polynomial_to_coefficients(a, b, policy)?;
    let mut fit = StarkFit {
        nu0,
        a,
        b,
        covariance,
        delta_mu: coeffs.delta_mu_debye(),
        delta_alpha: coeffs.delta_alpha_volume(),
        policy: *policy,
        regime: Regime::Mixed,
        reduced_chi2,
        n_points: n,
        field_span: span,
    };
    fit.regime = classify_regime(&fit, span);
    Ok(fit)
}

/// Compares the linear excursion |a|·span with the quadratic one |b|·span².
/// A fit with both zero is reported as mixed.
pub fn classify_regime(fit: &StarkFit, field_span: f64) -> Regime {
    let linear = fit.a.abs() * field_span;
    let quadratic = fit.b.abs() * field_span * field_span;
    if linear == 0.0 && quadratic == 0.0 {
        Regime::Mixed
    } else if quadratic < REGIME_RATIO * linear {
        Regime::Linear
    } else if linear < REGIME_RATIO * quadratic {
        Regime::Quadratic
    } else {
        Regime::Mixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl OrderStats {
    fn of(values: &[f64]) -> Self {
        Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median: median(values).expect("non-empty"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub count: usize,
    /// D
    pub delta_mu: OrderStats,
    /// Å³
    pub delta_alpha: OrderStats,
    pub linear: usize,
    pub quadratic: usize,
    pub mixed: usize,
}

pub fn population_summary(fits: &[StarkFit]) -> Result<PopulationSummary> {
    if fits.is_empty() {
        return Err(Error::Empty("population summary needs at least one fit"));
    }
    let mu: Vec<f64> = fits.iter().map(|f| f.delta_mu).collect();
    let alpha: Vec<f64> = fits.iter().map(|f| f.delta_alpha).collect();
    let count_of = |r: Regime| fits.iter().filter(|f| f.regime == r).count();
    Ok(PopulationSummary {
        count: fits.len(),
        delta_mu: OrderStats::of(&mu),
        delta_alpha: OrderStats::of(&alpha),
        linear: count_of(Regime::Linear),
        quadratic: count_of(Regime::Quadratic),
        mixed: count_of(Regime::Mixed),
    })
}
