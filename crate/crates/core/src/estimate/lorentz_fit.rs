//! Damped least-squares fit of a Lorentzian line plus flat background.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectra::SpectrumFrame;

pub const MAX_ITERATIONS: usize = 200;
const INITIAL_DAMPING: f64 = 1e-3;
const PARAM_TOLERANCE: f64 = 1e-9;
const MAX_DAMPING: f64 = 1e16;
pub const MIN_WINDOW_POINTS: usize = 8;

/// Starting point for a line fit. Rates in counts/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGuess {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub background: f64,
}

/// Fitted line. Parameter order in `covariance`: center, fwhm, amplitude, background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFit {
    /// Hz
    pub center: f64,
    /// Hz
    pub fwhm: f64,
    /// counts/s
    pub amplitude: f64,
    /// counts/s
    pub background: f64,
    pub covariance: [[f64; 4]; 4],
    pub converged: bool,
    /// RMS of the weighted residuals, √(χ²/(n−4)).
    pub residual_norm: f64,
    pub iterations: usize,
}

impl PeakFit {
    pub fn center_std(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn fwhm_std(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn as_guess(&self) -> LineGuess {
        LineGuess {
            center: self.center,
            fwhm: self.fwhm,
            amplitude: self.amplitude,
            background: self.background,
        }
    }
}

/// Local coordinates: ν = origin + scale·u; amplitudes in counts per point.
struct Problem<'a> {
    u: Vec<f64>,
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn model(u: f64, p: &[f64; 4]) -> (f64, [f64; 4]) {
        let [c, g, amp, bg] = *p;
        let hw = 0.5 * g;
        let d = u - c;
        let denom = d * d + hw * hw;
        let shape = hw * hw / denom;
        let d_c = amp * shape * 2.0 * d / denom;
        let d_g = amp * (hw / denom - hw * hw * hw / (denom * denom));
        (bg + amp * shape, [d_c, d_g, shape, 1.0])
    }

    fn chi2(&self, p: &[f64; 4]) -> f64 {
        self.u
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&u, &y), &w)| {
                let r = y - Self::model(u, p).0;
                w * r * r
            })
            .sum()
    }

    fn normal_equations(&self, p: &[f64; 4]) -> ([[f64; 4]; 4], [f64; 4]) {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for ((&u, &y), &w) in self.u.iter().zip(self.y).zip(&self.w) {
            let (m, j) = Self::model(u, p);
            let r = y - m;
            for a in 0..4 {
                jtr[a] += w * j[a] * r;
                for b in a..4 {
                    jtj[a][b] += w * j[a] * j[b];
                }
            }
        }
        for a in 0..4 {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        (jtj, jtr)
    }
}

/// Fits `dwell·(background + amplitude·L(ν; center, fwhm))` to the points of
/// `frame` in `window`. Weights are 1/max(counts, 1).
///
/// Only an undersized window is an error; failure to converge is reported
/// through `converged = false` with the best iterate.
pub fn fit_lorentzian(
    frame: &SpectrumFrame,
    window: Range<usize>,
    guess: LineGuess,
    dwell: f64,
) -> Result<PeakFit> {
    let window = window.start.min(frame.freqs.len())..window.end.min(frame.freqs.len());
    if window.len() < MIN_WINDOW_POINTS {
        return Err(Error::InvalidFrame(format!(
            "fit window has {} points, need at least {MIN_WINDOW_POINTS}",
            window.len()
        )));
    }
    if !(dwell.is_finite() && dwell > 0.0) {
        return Err(Error::OutOfRange {
            name: "dwell",
            requirement: "finite and > 0",
            value: dwell,
        });
    }
    if !(guess.fwhm.is_finite() && guess.fwhm > 0.0 && guess.center.is_finite()) {
        return Err(Error::InvalidFrame("initial guess needs finite center and positive fwhm".into()));
    }
    let origin = guess.center;
    let scale = guess.fwhm;
    let freqs = &frame.freqs[window.clone()];
    let y = &frame.counts[window];
    let problem = Problem {
        u: freqs.iter().map(|f| (f - origin) / scale).collect(),
        y,
        w: y.iter().map(|&c| 1.0 / c.max(1.0)).collect(),
    };

    let mut p = [0.0, 1.0, guess.amplitude * dwell, guess.background * dwell];
    let mut chi2 = problem.chi2(&p);
    let mut lambda = INITIAL_DAMPING;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut damped = jtj;
        for (k, row) in damped.iter_mut().enumerate() {
            row[k] += lambda * jtj[k][k].max(f64::MIN_POSITIVE);
        }
        let Some(step) = linalg::solve(&damped, &jtr, 1e-300) else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                break;
            }
            continue;
        };
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
        let step_norm = norm4(&step);
        let small = step_norm <= PARAM_TOLERANCE * (norm4(&p) + PARAM_TOLERANCE);
        let trial_chi2 = if trial[1] > 0.0 { problem.chi2(&trial) } else { f64::INFINITY };
        if trial_chi2 <= chi2 {
            p = trial;
            chi2 = trial_chi2;
            lambda = (lambda / 10.0).max(1e-12);
            if small {
                converged = true;
                break;
            }
        } else if small {
            converged = true;
            break;
        } else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                // no downhill step left at machine precision
                converged = true;
                break;
            }
        }
    }

    let n = problem.u.len();
    let (jtj, _) = problem.normal_equations(&p);
    let cov_local = linalg::inverse_symmetric(&jtj, 1e-300).unwrap_or([[f64::NAN; 4]; 4]);
    let jac = [scale, scale, 1.0 / dwell, 1.0 / dwell];
    let mut covariance = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            covariance[a][b] = jac[a] * cov_local[a][b] * jac[b];
        }
    }
    Ok(PeakFit {
        center: origin + scale * p[0],
        fwhm: scale * p[1],
        amplitude: p[2] / dwell,
        background: p[3] / dwell,
        covariance,
        converged: converged && p[1] > 0.0,
        residual_norm: (chi2 / (n.saturating_sub(4).max(1)) as f64).sqrt(),
        iterations,
    })
}

fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{linspace, lorentzian_rate};

    const GAMMA: f64 = 13.839_6e6;

    fn synthetic(center: f64, peak: f64, bg: f64, dwell: f64) -> SpectrumFrame {
        let freqs = linspace(-100e6, 100e6, 201);
        let counts = freqs
            .iter()
            .map(|&f| dwell * lorentzian_rate(f, center, GAMMA, peak, bg).unwrap())
            .collect();
        SpectrumFrame {
            step_index: 0,
            applied_field: 0.0,
            freqs,
            counts,
        }
    }

    #[test]
    fn noiseless_recovers_width() {
        let frame = synthetic(3.3e6, 1e4, 100.0, 0.01);
        let guess = LineGuess {
            center: 0.0,
            fwhm: 20e6,
            amplitude: 8e3,
            background: 50.0,
        };
        let fit = fit_lorentzian(&frame, 0..201, guess, 0.01).unwrap();
        assert!(fit.converged);
        assert!(((fit.fwhm - GAMMA) / GAMMA).abs() < 1e-3);
        assert!((fit.center - 3.3e6).abs() < 1.0);
        assert!(((fit.amplitude - 1e4) / 1e4).abs() < 1e-6);
    }

    #[test]
    fn exact_guess_is_a_fixed_point() {
        let frame = synthetic(-7e6, 1e4, 100.0, 0.01);
        let guess = LineGuess {
            center: -7e6,
            fwhm: GAMMA,
            amplitude: 1e4,
            background: 100.0,
        };
        let fit = fit_lorentzian(&frame, 50..150, guess, 0.01).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2, "{} iterations", fit.iterations);
    }

    #[test]
    fn small_window_rejected() {
        let frame = synthetic(0.0, 1e4, 100.0, 0.01);
        let guess = LineGuess {
            center: 0.0,
            fwhm: GAMMA,
            amplitude: 1e4,
            background: 100.0,
        };
        assert!(fit_lorentzian(&frame, 10..17, guess, 0.01).is_err());
    }

    #[test]
    fn covariance_is_symmetric_psd_diagonal() {
        let frame = synthetic(0.0, 1e4, 100.0, 0.01);
        let guess = LineGuess {
            center: 1e6,
            fwhm: 15e6,
            amplitude: 9e3,
            background: 90.0,
        };
        let fit = fit_lorentzian(&frame, 0..201, guess, 0.01).unwrap();
        for a in 0..4 {
            assert!(fit.covariance[a][a] > 0.0);
            for b in 0..4 {
                assert_eq!(fit.covariance[a][b], fit.covariance[b][a]);
            }
        }
    }

    #[test]
    fn flat_data_does_not_abort() {
        let frame = SpectrumFrame {
            step_index: 0,
            applied_field: 0.0,
            freqs: linspace(0.0, 1e8, 50),
            counts: vec![3.0; 50],
        };
        let guess = LineGuess {
            center: 5e7,
            fwhm: GAMMA,
            amplitude: 100.0,
            background: 300.0,
        };
        let fit = fit_lorentzian(&frame, 0..50, guess, 0.01).unwrap();
        assert!(fit.center.is_finite());
    }
}
