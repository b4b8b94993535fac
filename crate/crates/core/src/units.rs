//! Physical constants, unit conversions and the applied-to-local field map.
//!
//! Everything downstream works in SI. Debye and Å³ polarizability volumes only
//! appear where values enter or leave the program.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Planck constant, J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_8128e-12;
/// One debye in C·m, as used for the single-center dipole values.
pub const DEBYE: f64 = 3.33e-30;
/// One cubic ångström in m³.
pub const CUBIC_ANGSTROM: f64 = 1e-30;
/// Static dielectric constant of diamond used when none is given.
pub const DIAMOND_EPSILON: f64 = 5.7;
/// Excited-state lifetime of the NV⁻ zero-phonon transition, s.
pub const NV_LIFETIME: f64 = 11.5e-9;
/// One MV/m in V/m.
pub const MV_PER_M: f64 = 1e6;
/// One GHz in Hz.
pub const GHZ: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub h: f64,
    pub eps0: f64,
    pub debye: f64,
    pub epsilon: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            h: PLANCK,
            eps0: VACUUM_PERMITTIVITY,
            debye: DEBYE,
            epsilon: DIAMOND_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalFieldMode {
    Lorentz,
    None,
}

impl LocalFieldMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LocalFieldMode::Lorentz => "lorentz",
            LocalFieldMode::None => "none",
        }
    }
}

impl std::str::FromStr for LocalFieldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorentz" => Ok(LocalFieldMode::Lorentz),
            "none" => Ok(LocalFieldMode::None),
            other => Err(Error::InvalidConfig(format!(
                "unknown local-field mode `{other}` (expected lorentz or none)"
            ))),
        }
    }
}

/// How the applied field maps onto the field acting on the defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalFieldPolicy {
    pub mode: LocalFieldMode,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DIAMOND_EPSILON
}

impl Default for LocalFieldPolicy {
    fn default() -> Self {
        Self::lorentz(DIAMOND_EPSILON)
    }
}

impl LocalFieldPolicy {
    pub fn lorentz(epsilon: f64) -> Self {
        Self {
            mode: LocalFieldMode::Lorentz,
            epsilon,
        }
    }

    pub fn none() -> Self {
        Self {
            mode: LocalFieldMode::None,
            epsilon: DIAMOND_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 1.0) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                requirement: "finite and > 1",
                value: self.epsilon,
            });
        }
        Ok(())
    }

    /// Local-field factor: (ε+2)/3 for Lorentz, 1 otherwise.
    pub fn factor(&self) -> f64 {
        match self.mode {
            LocalFieldMode::Lorentz => (self.epsilon + 2.0) / 3.0,
            LocalFieldMode::None => 1.0,
        }
    }
}

pub fn debye_to_si(mu_debye: f64) -> Result<f64> {
    Ok(ensure_finite("dipole", mu_debye)? * DEBYE)
}

pub fn si_to_debye(mu_si: f64) -> Result<f64> {
    Ok(ensure_finite("dipole", mu_si)? / DEBYE)
}

/// Polarizability volume (Å³) to polarizability (C·m²/V): α = 4πε₀·α_vol.
pub fn polarizability_volume_to_si(alpha_vol: f64) -> Result<f64> {
    let v = ensure_finite("polarizability volume", alpha_vol)?;
    Ok(4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY * (v * CUBIC_ANGSTROM))
}

pub fn si_to_polarizability_volume(alpha_si: f64) -> Result<f64> {
    let a = ensure_finite("polarizability", alpha_si)?;
    Ok(a / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY) / CUBIC_ANGSTROM)
}

/// Lifetime-limited FWHM, 1/(2πτ).
pub fn lifetime_to_fwhm(tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::OutOfRange {
            name: "lifetime",
            requirement: "finite and > 0",
            value: tau,
        });
    }
    Ok(1.0 / (2.0 * std::f64::consts::PI * tau))
}

/// Parallel-plate estimate of the field between two surface electrodes.
pub fn bias_to_applied_field(voltage: f64, gap: f64) -> Result<f64> {
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::OutOfRange {
            name: "electrode gap",
            requirement: "finite and > 0",
            value: gap,
        });
    }
    Ok(ensure_finite("voltage", voltage)? / gap)
}

pub fn local_field(applied: f64, policy: &LocalFieldPolicy) -> Result<f64> {
    policy.validate()?;
    Ok(policy.factor() * applied)
}
