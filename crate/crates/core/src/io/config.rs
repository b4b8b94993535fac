//! Scenario files (TOML) describing emitters and the field sweep.
//!
//! Emitter parameters are given in lab units (D, Å³, Hz); everything else in
//! SI. Unknown keys are rejected and the error names them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{
    self, DiffusionParams, EmitterModel, NoiseMode, QuenchWindow, SweepConfig,
};
use crate::stark_model::{DefectOrientation, SplittingModel, StarkCoefficients};
use crate::units::{self, LocalFieldPolicy};

/// Built-in scenarios, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("trails", include_str!("../../presets/trails.toml")),
    ("nitrogen-rich", include_str!("../../presets/nitrogen-rich.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: LocalFieldPolicy,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub emitters: Vec<EmitterSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub field_start_v_per_m: f64,
    #[serde(default = "default_field_stop")]
    pub field_stop_v_per_m: f64,
    #[serde(default = "default_field_steps")]
    pub field_steps: usize,
    /// Explicit field list; overrides start/stop/steps when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields_v_per_m: Option<Vec<f64>>,
    #[serde(default = "default_freq_min")]
    pub freq_min_hz: f64,
    #[serde(default = "default_freq_max")]
    pub freq_max_hz: f64,
    #[serde(default = "default_freq_points")]
    pub freq_points: usize,
    #[serde(default = "default_dwell")]
    pub dwell_s: f64,
    #[serde(default = "default_background")]
    pub background_rate: f64,
    #[serde(default)]
    pub noise: NoiseMode,
    /// Absolute optical frequency of offset zero, Hz.
    #[serde(default = "default_origin")]
    pub origin_hz: f64,
    #[serde(default = "default_direction")]
    pub field_direction: [f64; 3],
}

fn default_field_stop() -> f64 {
    0.32e6
}
fn default_field_steps() -> usize {
    33
}
fn default_freq_min() -> f64 {
    -3.5e9
}
fn default_freq_max() -> f64 {
    3.5e9
}
fn default_freq_points() -> usize {
    3501
}
fn default_dwell() -> f64 {
    spectra::DEFAULT_DWELL
}
fn default_background() -> f64 {
    spectra::DEFAULT_BACKGROUND_RATE
}
/// 1.945 eV zero-phonon line.
fn default_origin() -> f64 {
    470.3e12
}
fn default_direction() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            field_start_v_per_m: 0.0,
            field_stop_v_per_m: default_field_stop(),
            field_steps: default_field_steps(),
            fields_v_per_m: None,
            freq_min_hz: default_freq_min(),
            freq_max_hz: default_freq_max(),
            freq_points: default_freq_points(),
            dwell_s: default_dwell(),
            background_rate: default_background(),
            noise: NoiseMode::Poisson,
            origin_hz: default_origin(),
            field_direction: default_direction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    #[serde(default)]
    pub nu0_hz: f64,
    #[serde(default)]
    pub delta_mu_debye: f64,
    #[serde(default)]
    pub delta_alpha_angstrom3: f64,
    /// Defaults to [0, 0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 3]>,
    /// FWHM, Hz; defaults to the lifetime limit of `lifetime_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hz: Option<f64>,
    #[serde(default = "default_lifetime")]
    pub lifetime_s: f64,
    #[serde(default = "default_peak_rate")]
    pub peak_rate: f64,
    #[serde(default)]
    pub background_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench: Option<QuenchWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting: Option<SplittingModel>,
}

fn default_lifetime() -> f64 {
    units::NV_LIFETIME
}
fn default_peak_rate() -> f64 {
    spectra::DEFAULT_PEAK_RATE
}

impl Default for EmitterSpec {
    fn default() -> Self {
        Self {
            nu0_hz: 0.0,
            delta_mu_debye: 0.0,
            delta_alpha_angstrom3: 0.0,
            orientation: None,
            gamma_hz: None,
            lifetime_s: default_lifetime(),
            peak_rate: default_peak_rate(),
            background_rate: 0.0,
            quench: None,
            diffusion: None,
            splitting: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

fn invalid(index: Option<usize>, err: Error) -> Error {
    match index {
        Some(i) => Error::InvalidConfig(format!("emitters[{i}]: {err}")),
        None => Error::InvalidConfig(format!("sweep: {err}")),
    }
}

impl EmitterSpec {
    pub fn to_model(&self) -> Result<EmitterModel> {
        let gamma = match self.gamma_hz {
            Some(g) => g,
            None => units::lifetime_to_fwhm(self.lifetime_s)?,
        };
        let orientation = match self.orientation {
            Some(axis) => DefectOrientation::along(axis)?,
            None => DefectOrientation::default(),
        };
        let model = EmitterModel {
            nu0: self.nu0_hz,
            coeffs: StarkCoefficients::from_lab_units(self.delta_mu_debye, self.delta_alpha_angstrom3)?,
            orientation,
            gamma,
            peak_rate: self.peak_rate,
            background_rate: self.background_rate,
            quench: self.quench.unwrap_or_default(),
            diffusion: self.diffusion.unwrap_or_default(),
            splitting: self.splitting,
        };
        model.validate()?;
        Ok(model)
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string() + &span_hint(text, e.span())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is serialisable")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::InvalidConfig(format!("unknown preset `{name}` (available: {})", names.join(", ")))
            })?;
        Self::from_toml(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("policy: {e}")))?;
        self.sweep_config()?;
        self.emitter_models()?;
        Ok(())
    }

    pub fn emitter_models(&self) -> Result<Vec<EmitterModel>> {
        self.emitters
            .iter()
            .enumerate()
            .map(|(i, e)| e.to_model().map_err(|err| invalid(Some(i), err)))
            .collect()
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let s = &self.sweep;
        if s.freq_points < 2 {
            return Err(Error::InvalidConfig("sweep: freq_points must be at least 2".into()));
        }
        if !(s.freq_min_hz < s.freq_max_hz) {
            return Err(Error::InvalidConfig("sweep: freq_min_hz must be below freq_max_hz".into()));
        }
        if !s.origin_hz.is_finite() {
            return Err(Error::InvalidConfig("sweep: origin_hz must be finite".into()));
        }
        let field_steps = match &s.fields_v_per_m {
            Some(list) => list.clone(),
            None => spectra::linspace(s.field_start_v_per_m, s.field_stop_v_per_m, s.field_steps),
        };
        let config = SweepConfig {
            field_steps,
            freq_grid: spectra::linspace(s.freq_min_hz, s.freq_max_hz, s.freq_points),
            dwell: s.dwell_s,
            seed: self.seed,
            policy: self.policy,
            background_rate: s.background_rate,
            noise: s.noise,
            field_direction: s.field_direction,
        };
        config.validate().map_err(|e| invalid(None, e))?;
        Ok(config)
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap();
            assert_eq!(c.sweep_config().unwrap().field_steps.len(), 33);
        }
        assert!(ScenarioConfig::preset("nope").is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ScenarioConfig::from_toml("seed = 1\n[sweep]\ndwel_s = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dwel_s"), "{msg}");
        let err = ScenarioConfig::from_toml("[[emitters]]\ndelta_mu = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("delta_mu"));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = ScenarioConfig::from_toml("[[emitters]]\ngamma_hz = -5.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("emitters[0]") && msg.contains("gamma"), "{msg}");
        let err = ScenarioConfig::from_toml("[sweep]\ndwell_s = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("dwell"));
        let err = ScenarioConfig::from_toml("[policy]\nmode = \"lorentz\"\nepsilon = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn serialisation_round_trip() {
        for (name, _) in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap();
            assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
        let empty = ScenarioConfig::from_toml("").unwrap();
        assert!(empty.emitters.is_empty());
        assert_eq!(ScenarioConfig::from_toml(&empty.to_toml()).unwrap(), empty);
    }
}
