//! Trail CSV: one row per (field step, frequency point).
//!
//! ```text
//! # origin_hz=470400000000000
//! # dwell_s=0.01
//! # seed=7
//! step_index,applied_field_V_per_m,freq_offset_Hz,counts
//! 0,0,-3500000000,1
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so reading back yields
//! the same binary doubles. Only `origin_hz` is required among the comment
//! keys; unknown comments are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectra::SpectrumFrame;

pub const HEADER: &str = "step_index,applied_field_V_per_m,freq_offset_Hz,counts";

#[derive(Debug, Clone, PartialEq)]
pub struct TrailCsv {
    /// Absolute frequency that offsets are measured from, Hz.
    pub origin_hz: f64,
    /// Seconds per point, when recorded.
    pub dwell: Option<f64>,
    pub seed: Option<u64>,
    pub frames: Vec<SpectrumFrame>,
}

pub fn write_trail_csv(data: &TrailCsv) -> String {
    let rows: usize = data.frames.iter().map(|f| f.freqs.len()).sum();
    let mut out = String::with_capacity(64 + rows * 32);
    let _ = writeln!(out, "# origin_hz={}", data.origin_hz);
    if let Some(d) = data.dwell {
        let _ = writeln!(out, "# dwell_s={d}");
    }
    if let Some(s) = data.seed {
        let _ = writeln!(out, "# seed={s}");
    }
    out.push_str(HEADER);
    out.push('\n');
    for frame in &data.frames {
        for (f, c) in frame.freqs.iter().zip(&frame.counts) {
            let _ = writeln!(out, "{},{},{},{}", frame.step_index, frame.applied_field, f, c);
        }
    }
    out
}

fn parse_f64(text: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} `{}`", text.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

pub fn read_trail_csv(text: &str) -> Result<TrailCsv> {
    let mut origin = None;
    let mut dwell = None;
    let mut seed = None;
    let mut header_seen = false;
    let mut steps: BTreeMap<usize, (f64, usize, SpectrumFrame)> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                match key.trim() {
                    "origin_hz" => origin = Some(parse_f64(value, line_no, "origin_hz")?),
                    "dwell_s" => {
                        let d = parse_f64(value, line_no, "dwell_s")?;
                        if d <= 0.0 {
                            return Err(Error::Parse {
                                line: line_no,
                                message: "dwell_s must be > 0".into(),
                            });
                        }
                        dwell = Some(d);
                    }
                    "seed" => {
                        seed = Some(value.trim().parse().map_err(|_| Error::Parse {
                            line: line_no,
                            message: format!("cannot parse seed `{}`", value.trim()),
                        })?)
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            if line.trim() != HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header `{HEADER}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let step: usize = cols[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("cannot parse step_index `{}`", cols[0].trim()),
        })?;
        let field = parse_f64(cols[1], line_no, "applied field")?;
        let freq = parse_f64(cols[2], line_no, "frequency offset")?;
        let counts = parse_f64(cols[3], line_no, "counts")?;
        if counts < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: "counts must be non-negative".into(),
            });
        }
        let entry = steps.entry(step).or_insert_with(|| {
            (
                field,
                line_no,
                SpectrumFrame {
                    step_index: step,
                    applied_field: field,
                    freqs: Vec::new(),
                    counts: Vec::new(),
                },
            )
        });
        if entry.0 != field {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "step {step} has field {field} but line {} gave {}",
                    entry.1, entry.0
                ),
            });
        }
        if let Some(&last) = entry.2.freqs.last() {
            if freq <= last {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("frequency offsets for step {step} must be strictly increasing"),
                });
            }
        }
        entry.2.freqs.push(freq);
        entry.2.counts.push(counts);
    }
    if !header_seen {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("missing header `{HEADER}`"),
        });
    }
    let origin_hz = origin.ok_or(Error::Parse {
        line: 1,
        message: "missing `# origin_hz=` comment".into(),
    })?;
    Ok(TrailCsv {
        origin_hz,
        dwell,
        seed,
        frames: steps.into_values().map(|(_, _, f)| f).collect(),
    })
}
