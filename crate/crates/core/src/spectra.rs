//! Synthesis of fluorescence-excitation scans and field-sweep datasets.
//!
//! A scan is a frequency grid (offsets from a scan origin, Hz) with photon
//! counts per point. Each emitter contributes a Lorentzian line whose center
//! follows the Stark polynomial in the applied field, optionally dimmed by a
//! quench window and displaced by spectral diffusion. Counts are Poisson
//! draws, or the exact expectation in [`NoiseMode::Expected`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stark_model::{
    self, DefectOrientation, SplittingModel, StarkCoefficients,
};
use crate::units::{self, LocalFieldPolicy};

pub const DEFAULT_PEAK_RATE: f64 = 1e4;
pub const DEFAULT_BACKGROUND_RATE: f64 = 100.0;
pub const DEFAULT_DWELL: f64 = 10e-3;

/// Field range over which an emitter stays bright.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchWindow {
    /// V/m
    pub center: f64,
    /// V/m
    pub half_width: f64,
    #[serde(default = "default_steepness")]
    pub steepness: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_steepness() -> f64 {
    8.0
}

fn default_true() -> bool {
    true
}

impl Default for QuenchWindow {
    fn default() -> Self {
        Self {
            center: 0.0,
            half_width: 1.0,
            steepness: default_steepness(),
            enabled: false,
        }
    }
}

impl QuenchWindow {
    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if !self.center.is_finite() {
            return Err(Error::NonFinite("quench center"));
        }
        for (name, v) in [("quench half_width", self.half_width), ("quench steepness", self.steepness)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::OutOfRange {
                    name,
                    requirement: "finite and > 0",
                    value: v,
                });
            }
        }
        Ok(())
    }

    fn raw(&self, field: f64) -> f64 {
        let s = self.steepness / self.half_width;
        let rising = logistic(s * (field - (self.center - self.half_width)));
        let falling = logistic(s * ((self.center + self.half_width) - field));
        rising * falling
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Spectral-diffusion random walk, one compound-Poisson increment per field step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionParams {
    /// Expected jumps per field step.
    pub jump_rate: f64,
    /// RMS size of one jump, Hz.
    pub jump_scale: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            jump_rate: 0.0,
            jump_scale: 0.0,
            enabled: false,
        }
    }
}

impl DiffusionParams {
    /// Nitrogen-rich material: frequent jumps much larger than the linewidth.
    pub fn nitrogen_rich() -> Self {
        Self {
            jump_rate: 5.0,
            jump_scale: 500e6,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("jump_rate", self.jump_rate), ("jump_scale", self.jump_scale)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::OutOfRange {
                    name,
                    requirement: "finite and >= 0",
                    value: v,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitterModel {
    /// Zero-field line center as an offset from the scan origin, Hz.
    pub nu0: f64,
    pub coeffs: StarkCoefficients,
    pub orientation: DefectOrientation,
    /// Lorentzian FWHM, Hz.
    pub gamma: f64,
    /// counts/s at resonance.
    pub peak_rate: f64,
    /// Unquenched emitter-specific background, counts/s.
    pub background_rate: f64,
    pub quench: QuenchWindow,
    pub diffusion: DiffusionParams,
    /// Transverse doublet splitting; `None` keeps a single line.
    pub splitting: Option<SplittingModel>,
}

impl Default for EmitterModel {
    fn default() -> Self {
        Self {
            nu0: 0.0,
            coeffs: StarkCoefficients::default(),
            orientation: DefectOrientation::default(),
            gamma: units::lifetime_to_fwhm(units::NV_LIFETIME).expect("positive lifetime"),
            peak_rate: DEFAULT_PEAK_RATE,
            background_rate: 0.0,
            quench: QuenchWindow::default(),
            diffusion: DiffusionParams::default(),
            splitting: None,
        }
    }
}

impl EmitterModel {
    pub fn with_coefficients(nu0: f64, coeffs: StarkCoefficients) -> Self {
        Self {
            nu0,
            coeffs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nu0.is_finite() {
            return Err(Error::NonFinite("nu0"));
        }
        StarkCoefficients::new(self.coeffs.delta_mu, self.coeffs.delta_alpha)?;
        DefectOrientation::new(self.orientation.axis())?;
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::OutOfRange {
                name: "gamma",
                requirement: "finite and > 0",
                value: self.gamma,
            });
        }
        for (name, v) in [("peak_rate", self.peak_rate), ("background_rate", self.background_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::OutOfRange {
                    name,
                    requirement: "finite and >= 0",
                    value: v,
                });
            }
        }
        self.quench.validate()?;
        self.diffusion.validate()?;
        if let Some(s) = &self.splitting {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Poisson,
    /// Exact expected counts, no randomness in the counts.
    Expected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Applied fields, V/m, in acquisition order.
    pub field_steps: Vec<f64>,
    /// Frequency offsets from the scan origin, Hz, strictly increasing.
    pub freq_grid: Vec<f64>,
    /// Seconds per frequency point.
    pub dwell: f64,
    pub seed: u64,
    pub policy: LocalFieldPolicy,
    /// Detector and stray-light background, counts/s.
    pub background_rate: f64,
    pub noise: NoiseMode,
    /// Lab-frame direction of the applied field, used only for doublet splitting.
    pub field_direction: [f64; 3],
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            field_steps: linspace(0.0, 0.32e6, 33),
            freq_grid: linspace(-3.5e9, 3.5e9, 3501),
            dwell: DEFAULT_DWELL,
            seed: 0,
            policy: LocalFieldPolicy::default(),
            background_rate: DEFAULT_BACKGROUND_RATE,
            noise: NoiseMode::Poisson,
            field_direction: [0.0, 0.0, 1.0],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(self.dwell.is_finite() && self.dwell > 0.0) {
            return Err(Error::OutOfRange {
                name: "dwell",
                requirement: "finite and > 0",
                value: self.dwell,
            });
        }
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            return Err(Error::OutOfRange {
                name: "background_rate",
                requirement: "finite and >= 0",
                value: self.background_rate,
            });
        }
        if self.freq_grid.is_empty() {
            return Err(Error::InvalidConfig("freq_grid is empty".into()));
        }
        if self.freq_grid.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("freq_grid"));
        }
        if self.freq_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("freq_grid must be strictly increasing".into()));
        }
        if self.field_steps.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("field_steps"));
        }
        Ok(())
    }
}

/// One excitation scan at a fixed applied field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFrame {
    pub step_index: usize,
    /// V/m
    pub applied_field: f64,
    /// Frequency offsets, Hz.
    pub freqs: Vec<f64>,
    /// Photon counts per point; integer-valued except in expected-counts mode.
    pub counts: Vec<f64>,
}

impl SpectrumFrame {
    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.counts.len() {
            return Err(Error::InvalidFrame(format!(
                "step {}: {} frequencies but {} counts",
                self.step_index,
                self.freqs.len(),
                self.counts.len()
            )));
        }
        if self.freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidFrame(format!(
                "step {}: frequencies not strictly increasing",
                self.step_index
            )));
        }
        if self.counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidFrame(format!(
                "step {}: negative or non-finite counts",
                self.step_index
            )));
        }
        Ok(())
    }
}

/// Sweep output plus the ground truth needed for closed-loop checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub frames: Vec<SpectrumFrame>,
    /// True line centers, `[step][emitter]`, including diffusion offsets.
    pub true_centers: Vec<Vec<f64>>,
    /// Quench envelope value, `[step][emitter]`.
    pub visibility: Vec<Vec<f64>>,
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Background plus a Lorentzian of FWHM `gamma` peaking at `peak_rate`.
pub fn lorentzian_rate(
    nu: f64,
    center: f64,
    gamma: f64,
    peak_rate: f64,
    background_rate: f64,
) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::OutOfRange {
            name: "gamma",
            requirement: "finite and > 0",
            value: gamma,
        });
    }
    Ok(background_rate + peak_rate * lorentz_profile(nu - center, gamma))
}

#[inline]
fn lorentz_profile(detuning: f64, gamma: f64) -> f64 {
    let hw2 = 0.25 * gamma * gamma;
    hw2 / (detuning * detuning + hw2)
}

/// Smooth window in [0, 1]: two logistic edges at center ± half_width,
/// normalised to exactly 1 at the window center. Disabled windows return 1.
pub fn quench_envelope(field: f64, window: &QuenchWindow) -> f64 {
    if !window.enabled {
        return 1.0;
    }
    (window.raw(field) / window.raw(window.center)).clamp(0.0, 1.0)
}

/// Deterministic line center for the applied field `field`.
pub fn line_center_at(emitter: &EmitterModel, field: f64, policy: &LocalFieldPolicy) -> Result<f64> {
    let local = units::local_field(field, policy)?;
    Ok(emitter.nu0 + stark_model::stark_shift(&emitter.coeffs, local))
}

/// Line positions and relative weights for one emitter (one or two branches).
fn emitter_lines(
    emitter: &EmitterModel,
    field: f64,
    offset: f64,
    config: &SweepConfig,
) -> Result<Vec<(f64, f64)>> {
    let center = line_center_at(emitter, field, &config.policy)? + offset;
    match &emitter.splitting {
        None => Ok(vec![(center, 1.0)]),
        Some(split) => {
            let lab = config.field_direction.map(|c| c * field);
            let fv = stark_model::project_field(lab, &emitter.orientation, &config.policy)?;
            let half = 0.5 * split.splitting(&fv);
            if half == 0.0 {
                Ok(vec![(center, 1.0)])
            } else {
                Ok(vec![(center + half, 0.5), (center - half, 0.5)])
            }
        }
    }
}

/// Expected counts per grid point.
pub fn expected_counts(
    emitters: &[EmitterModel],
    offsets: &[f64],
    field: f64,
    config: &SweepConfig,
) -> Result<Vec<f64>> {
    let mut rates = vec![config.background_rate; config.freq_grid.len()];
    for (emitter, &offset) in emitters.iter().zip(offsets) {
        let envelope = quench_envelope(field, &emitter.quench);
        let lines = emitter_lines(emitter, field, offset, config)?;
        for (rate, &nu) in rates.iter_mut().zip(&config.freq_grid) {
            *rate += emitter.background_rate;
            for &(center, weight) in &lines {
                *rate += envelope * weight * emitter.peak_rate * lorentz_profile(nu - center, emitter.gamma);
            }
        }
    }
    Ok(rates.into_iter().map(|r| r * config.dwell).collect())
}

fn realize<R: Rng + ?Sized>(mean: f64, noise: NoiseMode, rng: &mut R) -> f64 {
    match noise {
        NoiseMode::Expected => mean,
        NoiseMode::Poisson if mean > 0.0 => Poisson::new(mean)
            .expect("positive finite mean")
            .sample(rng),
        NoiseMode::Poisson => 0.0,
    }
}

fn render_frame<R: Rng + ?Sized>(
    emitters: &[EmitterModel],
    offsets: &[f64],
    step_index: usize,
    field: f64,
    config: &SweepConfig,
    rng: &mut R,
) -> Result<SpectrumFrame> {
    let means = expected_counts(emitters, offsets, field, config)?;
    let counts = means
        .into_iter()
        .map(|m| realize(m, config.noise, rng))
        .collect();
    Ok(SpectrumFrame {
        step_index,
        applied_field: field,
        freqs: config.freq_grid.clone(),
        counts,
    })
}

/// One scan at applied field `field`, without spectral diffusion.
pub fn simulate_frame<R: Rng + ?Sized>(
    emitters: &[EmitterModel],
    field: f64,
    config: &SweepConfig,
    rng: &mut R,
) -> Result<SpectrumFrame> {
    config.validate()?;
    for e in emitters {
        e.validate()?;
    }
    let offsets = vec![0.0; emitters.len()];
    render_frame(emitters, &offsets, 0, field, config, rng)
}

/// Full field sweep with ground truth. The RNG is seeded from `config.seed`;
/// per step, diffusion increments are drawn first (emitter order), then the
/// counts (grid order).
pub fn simulate_sweep_record(emitters: &[EmitterModel], config: &SweepConfig) -> Result<SweepRecord> {
    config.validate()?;
    for e in emitters {
        e.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut offsets = vec![0.0; emitters.len()];
    let mut record = SweepRecord {
        frames: Vec::with_capacity(config.field_steps.len()),
        true_centers: Vec::with_capacity(config.field_steps.len()),
        visibility: Vec::with_capacity(config.field_steps.len()),
    };
    for (step, &field) in config.field_steps.iter().enumerate() {
        for (emitter, offset) in emitters.iter().zip(offsets.iter_mut()) {
            *offset += diffusion_increment(&emitter.diffusion, &mut rng);
        }
        let frame = render_frame(emitters, &offsets, step, field, config, &mut rng)?;
        let mut centers = Vec::with_capacity(emitters.len());
        let mut vis = Vec::with_capacity(emitters.len());
        for (emitter, &offset) in emitters.iter().zip(&offsets) {
            centers.push(line_center_at(emitter, field, &config.policy)? + offset);
            vis.push(quench_envelope(field, &emitter.quench));
        }
        record.frames.push(frame);
        record.true_centers.push(centers);
        record.visibility.push(vis);
    }
    Ok(record)
}

pub fn simulate_sweep(emitters: &[EmitterModel], config: &SweepConfig) -> Result<Vec<SpectrumFrame>> {
    Ok(simulate_sweep_record(emitters, config)?.frames)
}

fn diffusion_increment<R: Rng + ?Sized>(params: &DiffusionParams, rng: &mut R) -> f64 {
    if !params.enabled || params.jump_rate == 0.0 || params.jump_scale == 0.0 {
        return 0.0;
    }
    let jumps = Poisson::new(params.jump_rate)
        .expect("positive jump rate")
        .sample(rng) as u64;
    let normal = Normal::new(0.0, params.jump_scale).expect("finite jump scale");
    (0..jumps).map(|_| normal.sample(rng)).sum()
}
