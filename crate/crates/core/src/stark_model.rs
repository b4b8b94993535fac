//! Second-order Stark forward model.
//!
//! The transition shift is `h·Δν = −Δμ·F − ½·Δα·F²` with Δμ and Δα projected
//! on the local field. Measured trails are parameterised as
//! `ν(E) = ν₀ + a·E + b·E²` in the applied field E; the two are related
//! through the local-field factor f by `a = −Δμ·f/h` and `b = −½·Δα·f²/h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{self, LocalFieldPolicy, PLANCK, VACUUM_PERMITTIVITY};

/// Spin-orbit energy scale of the excited state, Hz.
pub const SPIN_ORBIT_SCALE: f64 = 30e9;

/// Dipole-moment and polarizability change along the local field, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StarkCoefficients {
    /// C·m
    pub delta_mu: f64,
    /// C·m²/V
    pub delta_alpha: f64,
}

impl StarkCoefficients {
    pub fn new(delta_mu: f64, delta_alpha: f64) -> Result<Self> {
        if !delta_mu.is_finite() {
            return Err(Error::NonFinite("delta_mu"));
        }
        if !delta_alpha.is_finite() {
            return Err(Error::NonFinite("delta_alpha"));
        }
        Ok(Self {
            delta_mu,
            delta_alpha,
        })
    }

    /// Builds coefficients from debye and Å³ polarizability volume.
    pub fn from_lab_units(delta_mu_debye: f64, delta_alpha_vol: f64) -> Result<Self> {
        Self::new(
            units::debye_to_si(delta_mu_debye)?,
            units::polarizability_volume_to_si(delta_alpha_vol)?,
        )
    }

    pub fn delta_mu_debye(&self) -> f64 {
        self.delta_mu / units::DEBYE
    }

    pub fn delta_alpha_volume(&self) -> f64 {
        self.delta_alpha / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY) / units::CUBIC_ANGSTROM
    }
}

/// Symmetry axis of a defect in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct DefectOrientation {
    axis: [f64; 3],
}

impl DefectOrientation {
    pub fn new(axis: [f64; 3]) -> Result<Self> {
        let n = norm(axis);
        if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitAxis(n));
        }
        Ok(Self { axis })
    }

    /// Normalises an arbitrary non-zero direction.
    pub fn along(direction: [f64; 3]) -> Result<Self> {
        let n = norm(direction);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NonUnitAxis(n));
        }
        Self::new(direction.map(|c| c / n))
    }

    /// One of the four ⟨111⟩ body diagonals of the diamond lattice (index mod 4).
    pub fn body_diagonal(index: usize) -> Self {
        let s = 1.0 / 3f64.sqrt();
        let axis = match index % 4 {
            0 => [s, s, s],
            1 => [s, -s, -s],
            2 => [-s, s, -s],
            _ => [-s, -s, s],
        };
        Self::along(axis).expect("body diagonal is non-zero")
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    /// Orthonormal frame (x, y, z) with z along the defect axis.
    fn frame(&self) -> [[f64; 3]; 3] {
        let z = self.axis;
        // pick the lab axis least aligned with z as a seed for x
        let seed = if z[0].abs() <= z[1].abs() && z[0].abs() <= z[2].abs() {
            [1.0, 0.0, 0.0]
        } else if z[1].abs() <= z[2].abs() {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let d = dot(seed, z);
        let x_raw = [seed[0] - d * z[0], seed[1] - d * z[1], seed[2] - d * z[2]];
        let xn = norm(x_raw);
        let x = x_raw.map(|c| c / xn);
        let y = cross(z, x);
        [x, y, z]
    }
}

impl Default for DefectOrientation {
    fn default() -> Self {
        Self {
            axis: [0.0, 0.0, 1.0],
        }
    }
}

impl TryFrom<[f64; 3]> for DefectOrientation {
    type Error = Error;

    fn try_from(axis: [f64; 3]) -> Result<Self> {
        Self::along(axis)
    }
}

impl From<DefectOrientation> for [f64; 3] {
    fn from(o: DefectOrientation) -> Self {
        o.axis
    }
}

/// Local field in the defect frame (z along the symmetry axis), V/m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FieldVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFinite("field vector"));
        }
        Ok(Self { x, y, z })
    }

    pub fn magnitude(&self) -> f64 {
        norm([self.x, self.y, self.z])
    }

    pub fn transverse(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Transverse splitting of the orbital doublet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingModel {
    /// Hz per (V/m) of transverse local field.
    pub g_perp: f64,
    /// Shift magnitude above which quenching is likely, Hz.
    #[serde(default = "default_threshold")]
    pub quench_threshold: f64,
}

fn default_threshold() -> f64 {
    SPIN_ORBIT_SCALE
}

impl Default for SplittingModel {
    /// Reaches the spin-orbit scale only at 100× a 0.32 MV/m sweep ceiling.
    fn default() -> Self {
        Self {
            g_perp: SPIN_ORBIT_SCALE / (100.0 * 0.32e6),
            quench_threshold: SPIN_ORBIT_SCALE,
        }
    }
}

impl SplittingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_perp.is_finite() && self.g_perp >= 0.0) {
            return Err(Error::OutOfRange {
                name: "g_perp",
                requirement: "finite and >= 0",
                value: self.g_perp,
            });
        }
        Ok(())
    }

    /// Full splitting g⊥·√(Fx² + Fy²), Hz.
    pub fn splitting(&self, field: &FieldVector) -> f64 {
        self.g_perp * field.transverse()
    }
}

/// Frequency shift (Hz) at signed local field `field` along the projection axis.
pub fn stark_shift(coeffs: &StarkCoefficients, field: f64) -> f64 {
    (-coeffs.delta_mu * field - 0.5 * coeffs.delta_alpha * field * field) / PLANCK
}

/// Polynomial coefficients in the applied field: (a in Hz/(V/m), b in Hz/(V/m)²).
pub fn coefficients_to_polynomial(
    coeffs: &StarkCoefficients,
    policy: &LocalFieldPolicy,
) -> Result<(f64, f64)> {
    policy.validate()?;
    let f = policy.factor();
    Ok((
        -coeffs.delta_mu * f / PLANCK,
        -0.5 * coeffs.delta_alpha * f * f / PLANCK,
    ))
}

pub fn polynomial_to_coefficients(
    a: f64,
    b: f64,
    policy: &LocalFieldPolicy,
) -> Result<StarkCoefficients> {
    policy.validate()?;
    let f = policy.factor();
    StarkCoefficients::new(-a * PLANCK / f, -2.0 * b * PLANCK / (f * f))
}

/// Upper and lower branch frequencies of the split doublet.
///
/// The common shift uses the full local-field magnitude; the branches sit at
/// ±½·g⊥·|F⊥| around it.
pub fn branch_frequencies(
    nu0: f64,
    coeffs: &StarkCoefficients,
    split: &SplittingModel,
    field: &FieldVector,
) -> (f64, f64) {
    let center = nu0 + stark_shift(coeffs, field.magnitude());
    let half = 0.5 * split.splitting(field);
    (center + half, center - half)
}

/// Rotates a lab-frame applied field into the defect frame and applies the
/// local-field factor.
pub fn project_field(
    applied_lab: [f64; 3],
    orientation: &DefectOrientation,
    policy: &LocalFieldPolicy,
) -> Result<FieldVector> {
    policy.validate()?;
    DefectOrientation::new(orientation.axis)?;
    let [x, y, z] = orientation.frame();
    let f = policy.factor();
    FieldVector::new(
        f * dot(applied_lab, x),
        f * dot(applied_lab, y),
        f * dot(applied_lab, z),
    )
}

/// Classical effective volume and radius (Å³, Å) from α = (ε−1)·v·ε₀.
pub fn effective_defect_volume(delta_alpha: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(epsilon.is_finite() && epsilon > 1.0) {
        return Err(Error::OutOfRange {
            name: "epsilon",
            requirement: "finite and > 1",
            value: epsilon,
        });
    }
    if !delta_alpha.is_finite() {
        return Err(Error::NonFinite("delta_alpha"));
    }
    let volume_m3 = delta_alpha.abs() / ((epsilon - 1.0) * VACUUM_PERMITTIVITY);
    let volume = volume_m3 / units::CUBIC_ANGSTROM;
    let radius = (3.0 * volume / (4.0 * std::f64::consts::PI)).cbrt();
    Ok((volume, radius))
}

/// True when a shift reaches the quench threshold (inclusive).
pub fn quench_risk(shift: f64, threshold: f64) -> bool {
    shift.abs() >= threshold
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{GHZ, MV_PER_M};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Independent hand arithmetic: h·Δν = −Δμ·F.
    // 1.253 D = 4.17249e-30 C·m; × 1e6 V/m / 6.62607015e-34 J·s = 6.297081e9 Hz.
    const LINEAR_SHIFT_1MV: f64 = -6.297_081e9;
    // −½·(4πε₀·(−3.5e4 Å³))·(1e6)²/h = 3.894275e-36·1e12/2/6.62607015e-34 = 2.938601e9 Hz.
    const QUADRATIC_SHIFT_1MV: f64 = 2.938_601e9;

    #[test]
    fn stark_shift_examples() {
        let lin = StarkCoefficients::from_lab_units(1.253, 0.0).unwrap();
        assert!(rel(stark_shift(&lin, MV_PER_M), LINEAR_SHIFT_1MV) < 1e-5);
        let any = StarkCoefficients::from_lab_units(0.7, -2e4).unwrap();
        assert_eq!(stark_shift(&any, 0.0), 0.0);
        let quad = StarkCoefficients::from_lab_units(0.0, -3.5e4).unwrap();
        assert!(rel(stark_shift(&quad, MV_PER_M), QUADRATIC_SHIFT_1MV) < 1e-5);
    }

    #[test]
    fn polynomial_examples() {
        let lin = StarkCoefficients::from_lab_units(1.253, 0.0).unwrap();
        let (a, b) = coefficients_to_polynomial(&lin, &LocalFieldPolicy::none()).unwrap();
        assert!(rel(a * MV_PER_M, LINEAR_SHIFT_1MV) < 1e-5);
        assert_eq!(b, 0.0);
        let (a, _) = coefficients_to_polynomial(&lin, &LocalFieldPolicy::lorentz(5.7)).unwrap();
        assert!(rel(a * MV_PER_M / GHZ, -16.162) < 1e-3);
        let zero = coefficients_to_polynomial(&StarkCoefficients::default(), &LocalFieldPolicy::default()).unwrap();
        assert_eq!(zero, (0.0, 0.0));
    }

    #[test]
    fn polynomial_inverse_examples() {
        let none = LocalFieldPolicy::none();
        // h·6.3e3/3.33e-30 = 1.253581 D
        let c = polynomial_to_coefficients(-6.3 * GHZ / MV_PER_M, 0.0, &none).unwrap();
        assert!(rel(c.delta_mu_debye(), 1.253_581) < 1e-6);
        let z = polynomial_to_coefficients(0.0, 0.0, &none).unwrap();
        assert_eq!((z.delta_mu_debye(), z.delta_alpha_volume()), (0.0, 0.0));
        let b = 2.94 * GHZ / (MV_PER_M * MV_PER_M);
        let c = polynomial_to_coefficients(0.0, b, &none).unwrap();
        assert!(rel(c.delta_alpha_volume(), -3.5e4) < 1e-3);
    }

    #[test]
    fn branch_examples() {
        let coeffs = StarkCoefficients::from_lab_units(0.5, -1e4).unwrap();
        let split = SplittingModel {
            g_perp: 1e3,
            quench_threshold: SPIN_ORBIT_SCALE,
        };
        let axial = FieldVector::new(0.0, 0.0, 2e6).unwrap();
        let (p, m) = branch_frequencies(0.0, &coeffs, &split, &axial);
        assert_eq!(p, m);
        let f = FieldVector::new(3e6, 4e6, 0.0).unwrap();
        let (p, m) = branch_frequencies(0.0, &coeffs, &split, &f);
        assert!(rel(p - m, 5e9) < 1e-14);
        assert!(p >= m);
        let f2 = FieldVector::new(6e6, 8e6, 0.0).unwrap();
        let (p2, m2) = branch_frequencies(0.0, &coeffs, &split, &f2);
        assert!(rel(p2 - m2, 2.0 * (p - m)) < 1e-14);
    }

    #[test]
    fn project_examples() {
        let o = DefectOrientation::body_diagonal(2);
        let policy = LocalFieldPolicy::lorentz(5.7);
        let e = o.axis().map(|c| c * 1e5);
        let f = project_field(e, &o, &policy).unwrap();
        assert!(f.transverse() < 1e-9 * f.z);
        assert!(rel(f.z, policy.factor() * 1e5) < 1e-14);
        let zero = project_field([0.0; 3], &o, &policy).unwrap();
        assert_eq!(zero.magnitude(), 0.0);
        let bad = DefectOrientation { axis: [1.0, 1.0, 0.0] };
        assert!(project_field([1.0, 0.0, 0.0], &bad, &policy).is_err());
        assert!(DefectOrientation::new([0.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn effective_volume_examples() {
        let alpha = units::polarizability_volume_to_si(-3.5e4).unwrap();
        let (v, r) = effective_defect_volume(alpha, 5.7).unwrap();
        // 4π·3.5e4/4.7 = 93 579.36 Å³; (3v/4π)^(1/3) = (3.5e4·3/4.7)^(1/3) = 28.164 Å
        assert!(rel(v, 93_579.36) < 1e-6);
        assert!(rel(r, 28.164_18) < 1e-6);
        assert_eq!(effective_defect_volume(0.0, 5.7).unwrap().0, 0.0);
        let (v2, _) = effective_defect_volume(2.0 * alpha, 5.7).unwrap();
        assert!(rel(v2, 2.0 * v) < 1e-14);
        assert!(effective_defect_volume(alpha, 1.0).is_err());
    }

    #[test]
    fn quench_risk_examples() {
        assert!(quench_risk(31e9, SPIN_ORBIT_SCALE));
        assert!(!quench_risk(0.0, SPIN_ORBIT_SCALE));
        assert!(quench_risk(30e9, SPIN_ORBIT_SCALE));
        assert!(quench_risk(-30e9, SPIN_ORBIT_SCALE));
    }

    #[test]
    fn default_splitting_scale() {
        let s = SplittingModel::default();
        let f = FieldVector::new(100.0 * 0.32e6, 0.0, 0.0).unwrap();
        assert!(rel(s.splitting(&f), SPIN_ORBIT_SCALE) < 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn coeffs() -> impl Strategy<Value = StarkCoefficients> {
            (-1.5f64..1.5, -6e4f64..0.0)
                .prop_map(|(m, a)| StarkCoefficients::from_lab_units(m, a).unwrap())
        }

        proptest! {
            #[test]
            fn odd_even_decomposition(c in coeffs(), f in -1e7f64..1e7) {
                let sum = stark_shift(&c, f) + stark_shift(&c, -f);
                let expect = -c.delta_alpha * f * f / PLANCK;
                prop_assert!((sum - expect).abs() <= 1e-12 * stark_shift(&c, f).abs().max(expect.abs()).max(1e-300));
            }

            #[test]
            fn pure_quadratic_is_even(a in -6e4f64..0.0, f in -1e7f64..1e7) {
                let c = StarkCoefficients::from_lab_units(0.0, a).unwrap();
                prop_assert_eq!(stark_shift(&c, f), stark_shift(&c, -f));
            }

            #[test]
            fn polynomial_round_trip(c in coeffs(), eps in 1.5f64..15.0, lorentz in any::<bool>()) {
                let policy = if lorentz { LocalFieldPolicy::lorentz(eps) } else { LocalFieldPolicy::none() };
                let (a, b) = coefficients_to_polynomial(&c, &policy).unwrap();
                let back = polynomial_to_coefficients(a, b, &policy).unwrap();
                prop_assert!((back.delta_mu - c.delta_mu).abs() <= 1e-12 * c.delta_mu.abs());
                prop_assert!((back.delta_alpha - c.delta_alpha).abs() <= 1e-12 * c.delta_alpha.abs());
            }

            #[test]
            fn lorentz_scales_polynomial(c in coeffs(), eps in 1.5f64..15.0) {
                let (a0, b0) = coefficients_to_polynomial(&c, &LocalFieldPolicy::none()).unwrap();
                let p = LocalFieldPolicy::lorentz(eps);
                let (a1, b1) = coefficients_to_polynomial(&c, &p).unwrap();
                let f = p.factor();
                prop_assert!((a1 - f * a0).abs() <= 1e-12 * a1.abs());
                prop_assert!((b1 - f * f * b0).abs() <= 1e-12 * b1.abs());
            }

            #[test]
            fn splitting_rotation_invariant(fx in -1e7f64..1e7, fy in -1e7f64..1e7, fz in -1e7f64..1e7, theta in 0f64..6.3) {
                let s = SplittingModel::default();
                let f = FieldVector::new(fx, fy, fz).unwrap();
                let (sn, cs) = theta.sin_cos();
                let r = FieldVector::new(cs * fx - sn * fy, sn * fx + cs * fy, fz).unwrap();
                let (d0, d1) = (s.splitting(&f), s.splitting(&r));
                prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1e-300));
            }

            #[test]
            fn splitting_homogeneous(fx in -1e7f64..1e7, fy in -1e7f64..1e7, k in 0f64..50.0) {
                let s = SplittingModel::default();
                let f = FieldVector::new(fx, fy, 0.0).unwrap();
                let g = FieldVector::new(k * fx, k * fy, 0.0).unwrap();
                let (d0, d1) = (k * s.splitting(&f), s.splitting(&g));
                prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1e-300));
            }

            #[test]
            fn projection_preserves_norm(ex in -1e6f64..1e6, ey in -1e6f64..1e6, ez in -1e6f64..1e6,
                                         ax in -1f64..1.0, ay in -1f64..1.0, az in 0.1f64..1.0) {
                let o = DefectOrientation::along([ax, ay, az]).unwrap();
                let p = LocalFieldPolicy::lorentz(5.7);
                let f = project_field([ex, ey, ez], &o, &p).unwrap();
                let expect = p.factor() * (ex * ex + ey * ey + ez * ez).sqrt();
                prop_assert!((f.magnitude() - expect).abs() <= 1e-12 * expect.max(1e-300));
            }
        }
    }
}
