//! Inverse pipeline: detect lines, fit Lorentzians, link trails, regress
//! trails against field and convert to physical Stark parameters.

mod linking;
mod lorentz_fit;
mod peaks;
mod stark_fit;

pub use linking::{link_trails, FramePeaks, LinkConfig, Trail, TrailPoint, DEFAULT_MAX_MISSING};
pub use lorentz_fit::{fit_lorentzian, LineGuess, PeakFit, MAX_ITERATIONS, MIN_WINDOW_POINTS};
pub use peaks::{detect_peaks, median_background, RoughPeak};
pub use stark_fit::{
    classify_regime, fit_stark_trail, population_summary, OrderStats, PopulationSummary, Regime,
    StarkFit, REGIME_RATIO,
};

use crate::error::{Error, Result};
use crate::spectra::SpectrumFrame;
use crate::units::{self, LocalFieldPolicy};

/// Settings for [`analyze`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub policy: LocalFieldPolicy,
    pub min_snr: f64,
    /// Minimum spacing between detections in one frame, Hz.
    pub min_separation: f64,
    /// Linking gate, Hz; `None` uses 5× the median fitted FWHM.
    pub gate: Option<f64>,
    pub max_missing: usize,
    /// Trails with fewer points are reported but not regressed.
    pub min_trail_points: usize,
    /// Half-width of the fit window in units of the estimated FWHM.
    pub window_fwhms: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let gamma = units::lifetime_to_fwhm(units::NV_LIFETIME).expect("positive lifetime");
        Self {
            policy: LocalFieldPolicy::default(),
            min_snr: 8.0,
            min_separation: 3.0 * gamma,
            gate: None,
            max_missing: DEFAULT_MAX_MISSING,
            min_trail_points: 4,
            window_fwhms: 5.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        let positive = [
            ("min_snr", self.min_snr),
            ("min_separation", self.min_separation),
            ("window_fwhms", self.window_fwhms),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::OutOfRange {
                    name,
                    requirement: "finite and > 0",
                    value: v,
                });
            }
        }
        if let Some(g) = self.gate {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::OutOfRange {
                    name: "gate",
                    requirement: "finite and > 0",
                    value: g,
                });
            }
        }
        if self.min_trail_points < 3 {
            return Err(Error::InvalidConfig("min_trail_points must be at least 3".into()));
        }
        Ok(())
    }
}

/// Regression outcome for one trail.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailResult {
    pub trail: Trail,
    pub fit: Option<StarkFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub trails: Vec<TrailResult>,
    pub summary: Option<PopulationSummary>,
    pub gate: f64,
    pub peaks_detected: usize,
    pub peaks_converged: usize,
    pub warnings: Vec<String>,
}

impl Analysis {
    pub fn fits(&self) -> impl Iterator<Item = (usize, &StarkFit)> {
        self.trails
            .iter()
            .filter_map(|t| t.fit.as_ref().map(|f| (t.trail.id, f)))
    }
}

/// Initial line guess from the half-maximum crossings around a rough peak.
fn guess_line(frame: &SpectrumFrame, peak: &RoughPeak, background: f64, dwell: f64) -> LineGuess {
    let counts = &frame.counts;
    let freqs = &frame.freqs;
    let half = background + 0.5 * peak.height;
    let mut lo = peak.index;
    while lo > 0 && counts[lo] > half {
        lo -= 1;
    }
    let mut hi = peak.index;
    while hi + 1 < counts.len() && counts[hi] > half {
        hi += 1;
    }
    let step = if freqs.len() > 1 {
        (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64
    } else {
        1.0
    };
    let width = (freqs[hi] - freqs[lo]).max(2.0 * step);
    LineGuess {
        center: peak.center,
        fwhm: width,
        amplitude: peak.height / dwell,
        background: background / dwell,
    }
}

fn fit_window(frame: &SpectrumFrame, center: f64, half_width: f64) -> std::ops::Range<usize> {
    let freqs = &frame.freqs;
    let lo = freqs.partition_point(|&f| f < center - half_width);
    let hi = freqs.partition_point(|&f| f <= center + half_width);
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo < MIN_WINDOW_POINTS && (lo > 0 || hi < freqs.len()) {
        lo = lo.saturating_sub(1);
        hi = (hi + 1).min(freqs.len());
    }
    lo..hi
}

/// Detects and fits every line in a frame, dropping implausible fits.
pub fn fit_frame(frame: &SpectrumFrame, dwell: f64, config: &AnalysisConfig) -> Result<(usize, Vec<PeakFit>)> {
    frame.validate()?;
    let background = median_background(&frame.counts);
    let rough = detect_peaks(frame, config.min_snr, config.min_separation);
    let mut fits = Vec::with_capacity(rough.len());
    for peak in &rough {
        let guess = guess_line(frame, peak, background, dwell);
        let half_width = config.window_fwhms * guess.fwhm;
        let window = fit_window(frame, guess.center, half_width);
        if window.len() < MIN_WINDOW_POINTS {
            continue;
        }
        let (f_lo, f_hi) = (frame.freqs[window.start], frame.freqs[window.end - 1]);
        let fit = fit_lorentzian(frame, window, guess, dwell)?;
        let plausible = fit.converged
            && fit.fwhm > 0.0
            && fit.fwhm < f_hi - f_lo
            && fit.amplitude > 0.0
            && fit.center >= f_lo
            && fit.center <= f_hi
            && fit.covariance[0][0].is_finite()
            && fit.covariance[0][0] > 0.0;
        if plausible {
            fits.push(fit);
        }
    }
    fits.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok((rough.len(), fits))
}

/// detect → fit → link → regress → classify → summarise.
///
/// Frames are processed in order of increasing applied field.
pub fn analyze(frames: &[SpectrumFrame], dwell: f64, config: &AnalysisConfig) -> Result<Analysis> {
    config.validate()?;
    let mut ordered: Vec<&SpectrumFrame> = frames.iter().collect();
    ordered.sort_by(|a, b| a.applied_field.total_cmp(&b.applied_field).then(a.step_index.cmp(&b.step_index)));

    let mut per_frame = Vec::with_capacity(ordered.len());
    let mut peaks_detected = 0;
    for frame in ordered {
        let (detected, fits) = fit_frame(frame, dwell, config)?;
        peaks_detected += detected;
        per_frame.push(FramePeaks {
            step_index: frame.step_index,
            applied_field: frame.applied_field,
            peaks: fits,
        });
    }
    let peaks_converged: usize = per_frame.iter().map(|f| f.peaks.len()).sum();

    let mut warnings = Vec::new();
    let gate = match config.gate {
        Some(g) => g,
        None => {
            let widths: Vec<f64> = per_frame
                .iter()
                .flat_map(|f| f.peaks.iter().map(|p| p.fwhm))
                .collect();
            peaks::median(&widths).map(|w| 5.0 * w).unwrap_or(config.min_separation)
        }
    };
    let trails = link_trails(
        &per_frame,
        &LinkConfig {
            gate,
            max_missing: config.max_missing,
        },
    );

    let mut results = Vec::with_capacity(trails.len());
    for trail in trails {
        let fit = if trail.points.len() >= config.min_trail_points {
            match fit_stark_trail(&trail, &config.policy) {
                Ok(fit) => Some(fit),
                Err(e) => {
                    warnings.push(format!("trail {}: {e}", trail.id));
                    None
                }
            }
        } else {
            None
        };
        results.push(TrailResult { trail, fit });
    }
    let fits: Vec<StarkFit> = results.iter().filter_map(|r| r.fit).collect();
    if fits.is_empty() {
        warnings.push("no trail long enough for a Stark fit".into());
    }
    let summary = population_summary(&fits).ok();
    Ok(Analysis {
        trails: results,
        summary,
        gate,
        peaks_detected,
        peaks_converged,
        warnings,
    })
}
