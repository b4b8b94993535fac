use crate::spectra::SpectrumFrame;

/// A detected local maximum before fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughPeak {
    pub index: usize,
    /// Hz
    pub center: f64,
    /// Counts above the frame background.
    pub height: f64,
}

/// Median count of a frame, used as the background estimate.
pub fn median_background(counts: &[f64]) -> f64 {
    median(counts).unwrap_or(0.0)
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Local maxima above `median + min_snr·√median`, strongest first.
///
/// Maxima closer than `min_separation` (Hz) to a stronger accepted peak are
/// suppressed so noise on one line does not yield several detections. The
/// square root uses max(median, 1) so empty backgrounds still need a few
/// counts to trigger.
pub fn detect_peaks(frame: &SpectrumFrame, min_snr: f64, min_separation: f64) -> Vec<RoughPeak> {
    let counts = &frame.counts;
    let n = counts.len();
    if n == 0 {
        return Vec::new();
    }
    let background = median_background(counts);
    let threshold = background + min_snr * background.max(1.0).sqrt();
    let mut candidates: Vec<RoughPeak> = (0..n)
        .filter(|&i| {
            let c = counts[i];
            c > threshold
                && (i == 0 || c >= counts[i - 1])
                && (i + 1 == n || c > counts[i + 1])
        })
        .map(|i| RoughPeak {
            index: i,
            center: frame.freqs[i],
            height: counts[i] - background,
        })
        .collect();
    candidates.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.index.cmp(&b.index)));
    let mut accepted: Vec<RoughPeak> = Vec::new();
    for c in candidates {
        if accepted
            .iter()
            .all(|p| (p.center - c.center).abs() >= min_separation)
        {
            accepted.push(c);
        }
    }
    accepted
}
