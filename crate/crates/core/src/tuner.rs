//! Bias-field planning: where do two line polynomials (or a line and a fixed
//! target frequency) coincide inside an allowed field range?

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::StarkFit;
use crate::stark_model::{self, SPIN_ORBIT_SCALE};

/// Back-substitution tolerance for a resonance, Hz.
pub const RESONANCE_TOLERANCE: f64 = 1e3;

/// ν(E) = nu0 + a·E + b·E².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinePolynomial {
    pub nu0: f64,
    pub a: f64,
    pub b: f64,
}

impl LinePolynomial {
    pub fn constant(frequency: f64) -> Self {
        Self {
            nu0: frequency,
            a: 0.0,
            b: 0.0,
        }
    }

    pub fn at(&self, field: f64) -> f64 {
        self.nu0 + field * (self.a + self.b * field)
    }

    /// Shift relative to zero field.
    pub fn shift(&self, field: f64) -> f64 {
        field * (self.a + self.b * field)
    }
}

impl From<&StarkFit> for LinePolynomial {
    fn from(fit: &StarkFit) -> Self {
        Self {
            nu0: fit.nu0,
            a: fit.a,
            b: fit.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootInfo {
    /// V/m
    pub field: f64,
    pub feasible: bool,
    /// νA − νB at the root, Hz.
    pub detuning: f64,
    /// Each emitter's shift from its zero-field position, Hz.
    pub shift_a: f64,
    pub shift_b: f64,
    pub quench_risk: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningSolution {
    pub range: (f64, f64),
    /// Real roots in ascending order.
    pub roots: Vec<RootInfo>,
    /// Both polynomials are identical, so every field is resonant.
    pub always_resonant: bool,
    /// Smallest |νA − νB| reachable in range, Hz, and where it occurs.
    pub min_detuning: f64,
    pub min_detuning_field: f64,
}

impl TuningSolution {
    pub fn root_fields(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.field).collect()
    }

    pub fn feasible_roots(&self) -> Vec<f64> {
        self.roots.iter().filter(|r| r.feasible).map(|r| r.field).collect()
    }
}

/// Real roots of c + b·x + a·x², ascending. `None` means identically zero.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<Vec<f64>> {
    if a == 0.0 {
        if b == 0.0 {
            return if c == 0.0 { None } else { Some(Vec::new()) };
        }
        return Some(vec![-c / b]);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Some(Vec::new());
    }
    if disc == 0.0 {
        return Some(vec![-b / (2.0 * a)]);
    }
    let sign = if b < 0.0 { -1.0 } else { 1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    let mut roots = vec![q / a, c / q];
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    Some(roots)
}

/// One Newton step on c + b·x + a·x², kept only if it reduces the residual.
fn polish(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let f = |x: f64| c + x * (b + a * x);
    let slope = b + 2.0 * a * x;
    if slope == 0.0 {
        return x;
    }
    let y = x - f(x) / slope;
    if f(y).abs() < f(x).abs() {
        y
    } else {
        x
    }
}

fn validate_range(range: (f64, f64)) -> Result<()> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "field range needs finite Emin < Emax, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Fields at which `line_a` and `line_b` coincide.
pub fn resonance_between(
    line_a: &LinePolynomial,
    line_b: &LinePolynomial,
    range: (f64, f64),
) -> Result<TuningSolution> {
    validate_range(range)?;
    let (lo, hi) = range;
    let qa = line_a.b - line_b.b;
    let qb = line_a.a - line_b.a;
    let qc = line_a.nu0 - line_b.nu0;
    let detuning = |e: f64| line_a.at(e) - line_b.at(e);

    let Some(raw) = quadratic_roots(qa, qb, qc) else {
        return Ok(TuningSolution {
            range,
            roots: Vec::new(),
            always_resonant: true,
            min_detuning: 0.0,
            min_detuning_field: lo.max(0.0).min(hi),
        });
    };
    let mut fields: Vec<f64> = raw.into_iter().map(|x| polish(qa, qb, qc, x)).collect();
    fields.sort_by(f64::total_cmp);
    fields.dedup();
    let roots: Vec<RootInfo> = fields
        .into_iter()
        .map(|e| RootInfo {
            field: e,
            feasible: e >= lo && e <= hi,
            detuning: detuning(e),
            shift_a: line_a.shift(e),
            shift_b: line_b.shift(e),
            quench_risk: false,
        })
        .collect();

    let mut candidates = vec![lo, hi];
    candidates.extend(roots.iter().filter(|r| r.feasible).map(|r| r.field));
    if qa != 0.0 {
        let vertex = -qb / (2.0 * qa);
        if vertex > lo && vertex < hi {
            candidates.push(vertex);
        }
    }
    let (min_detuning_field, min_detuning) = candidates
        .into_iter()
        .map(|e| (e, detuning(e).abs()))
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.total_cmp(&y.0)))
        .expect("range endpoints are candidates");

    Ok(TuningSolution {
        range,
        roots,
        always_resonant: false,
        min_detuning,
        min_detuning_field,
    })
}

pub fn resonance_fields(fit_a: &StarkFit, fit_b: &StarkFit, range: (f64, f64)) -> Result<TuningSolution> {
    resonance_between(&fit_a.into(), &fit_b.into(), range)
}

pub fn tune_to_target(fit: &StarkFit, target: f64, range: (f64, f64)) -> Result<TuningSolution> {
    if !target.is_finite() {
        return Err(Error::NonFinite("target frequency"));
    }
    resonance_between(&fit.into(), &LinePolynomial::constant(target), range)
}

/// Flags roots where either emitter must shift by at least `threshold` Hz.
pub fn annotate_risk(mut solution: TuningSolution, threshold: f64) -> TuningSolution {
    for root in &mut solution.roots {
        root.quench_risk = stark_model::quench_risk(root.shift_a, threshold)
            || stark_model::quench_risk(root.shift_b, threshold);
    }
    solution
}

/// [`annotate_risk`] at the spin-orbit scale.
pub fn annotate_default_risk(solution: TuningSolution) -> TuningSolution {
    annotate_risk(solution, SPIN_ORBIT_SCALE)
}
