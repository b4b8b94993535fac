//! Frame-to-frame association of fitted lines into spectral trails.

use super::lorentz_fit::PeakFit;

pub const DEFAULT_MAX_MISSING: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrailPoint {
    pub step_index: usize,
    /// V/m
    pub applied_field: f64,
    pub fit: PeakFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trail {
    pub id: usize,
    pub points: Vec<TrailPoint>,
}

impl Trail {
    pub fn fields(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.applied_field)
    }

    /// Linear extrapolation from the last two points, else the last center.
    fn predict(&self, field: f64) -> f64 {
        let n = self.points.len();
        let last = &self.points[n - 1];
        if n >= 2 {
            let prev = &self.points[n - 2];
            let de = last.applied_field - prev.applied_field;
            if de != 0.0 {
                let slope = (last.fit.center - prev.fit.center) / de;
                return last.fit.center + slope * (field - last.applied_field);
            }
        }
        last.fit.center
    }
}

/// Fitted lines of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePeaks {
    pub step_index: usize,
    pub applied_field: f64,
    pub peaks: Vec<PeakFit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Maximum distance between a trail's predicted position and a peak, Hz.
    pub gate: f64,
    /// Consecutive frames a trail may miss before it is closed.
    pub max_missing: usize,
}

struct OpenTrail {
    trail: Trail,
    missed: usize,
}

/// Greedy nearest-neighbour linking over frames ordered by increasing field.
///
/// In each frame every (trail, peak) pair within the gate is ranked by
/// distance and assigned greedily; leftover peaks start new trails. Trail ids
/// follow creation order, so the output is deterministic.
pub fn link_trails(frames: &[FramePeaks], config: &LinkConfig) -> Vec<Trail> {
    let mut open: Vec<OpenTrail> = Vec::new();
    let mut closed: Vec<Trail> = Vec::new();
    let mut next_id = 0;

    for frame in frames {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, ot) in open.iter().enumerate() {
            let last_field = ot.trail.points.last().map(|p| p.applied_field);
            if last_field.is_some_and(|f| f >= frame.applied_field) {
                continue;
            }
            let predicted = ot.trail.predict(frame.applied_field);
            for (pi, peak) in frame.peaks.iter().enumerate() {
                let d = (peak.center - predicted).abs();
                if d <= config.gate {
                    pairs.push((d, ti, pi));
                }
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

        let mut trail_taken = vec![false; open.len()];
        let mut peak_taken = vec![false; frame.peaks.len()];
        for (_, ti, pi) in pairs {
            if trail_taken[ti] || peak_taken[pi] {
                continue;
            }
            trail_taken[ti] = true;
            peak_taken[pi] = true;
            open[ti].trail.points.push(TrailPoint {
                step_index: frame.step_index,
                applied_field: frame.applied_field,
                fit: frame.peaks[pi],
            });
            open[ti].missed = 0;
        }

        let mut still_open = Vec::with_capacity(open.len());
        for (ot, taken) in open.into_iter().zip(trail_taken) {
            let mut ot = ot;
            if !taken {
                ot.missed += 1;
            }
            if ot.missed > config.max_missing {
                closed.push(ot.trail);
            } else {
                still_open.push(ot);
            }
        }
        open = still_open;

        let mut fresh: Vec<usize> = (0..frame.peaks.len()).filter(|&i| !peak_taken[i]).collect();
        fresh.sort_by(|&i, &j| frame.peaks[i].center.total_cmp(&frame.peaks[j].center));
        for pi in fresh {
            open.push(OpenTrail {
                trail: Trail {
                    id: next_id,
                    points: vec![TrailPoint {
                        step_index: frame.step_index,
                        applied_field: frame.applied_field,
                        fit: frame.peaks[pi],
                    }],
                },
                missed: 0,
            });
            next_id += 1;
        }
    }

    closed.extend(open.into_iter().map(|ot| ot.trail));
    closed.sort_by_key(|t| t.id);
    closed
}
