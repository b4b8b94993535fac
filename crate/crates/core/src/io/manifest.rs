//! Deterministic JSON documents: the fit manifest and the simulation
//! ground-truth sidecar.
//!
//! Keys are emitted in a fixed order and every float is written with 17
//! significant digits (`{:.16e}`), which round-trips any binary double.
//! Non-finite values become `null`.

use std::fmt::Write as _;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimate::{Analysis, AnalysisConfig, PopulationSummary, StarkFit};
use crate::units::LocalFieldPolicy;

pub const MANIFEST_FORMAT: &str = "starkline-fit-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Ordered JSON tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Node>),
    Map(Vec<(String, Node)>),
}

impl Node {
    pub fn map() -> Self {
        Node::Map(Vec::new())
    }

    /// Appends a key; panics if `self` is not a map.
    pub fn with(mut self, key: &str, value: impl Into<Node>) -> Self {
        match &mut self {
            Node::Map(entries) => entries.push((key.to_string(), value.into())),
            _ => panic!("with() on a non-map node"),
        }
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Node::Null => out.push_str("null"),
            Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Node::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Node::Float(f) => out.push_str(&format_float(*f)),
            Node::Str(s) => write_string(out, s),
            Node::List(items) if items.is_empty() => out.push_str("[]"),
            Node::Map(entries) if entries.is_empty() => out.push_str("{}"),
            Node::List(items) => {
                // flat numeric rows stay on one line
                if items.iter().all(|i| matches!(i, Node::Float(_) | Node::Int(_) | Node::Null)) {
                    out.push('[');
                    for (k, item) in items.iter().enumerate() {
                        if k > 0 {
                            out.push_str(", ");
                        }
                        item.write(out, indent);
                    }
                    out.push(']');
                    return;
                }
                out.push_str("[\n");
                for (k, item) in items.iter().enumerate() {
                    pad(out, indent + 1);
                    item.write(out, indent + 1);
                    if k + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                pad(out, indent);
                out.push(']');
            }
            Node::Map(entries) => {
                out.push_str("{\n");
                for (k, (key, value)) in entries.iter().enumerate() {
                    pad(out, indent + 1);
                    write_string(out, key);
                    out.push_str(": ");
                    value.write(out, indent + 1);
                    if k + 1 < entries.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                pad(out, indent);
                out.push('}');
            }
        }
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// 17 significant digits; `null` for NaN and infinities.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

impl From<f64> for Node {
    fn from(v: f64) -> Self {
        Node::Float(v)
    }
}
impl From<usize> for Node {
    fn from(v: usize) -> Self {
        Node::Int(v as i64)
    }
}
impl From<u64> for Node {
    fn from(v: u64) -> Self {
        Node::Int(v as i64)
    }
}
impl From<u32> for Node {
    fn from(v: u32) -> Self {
        Node::Int(v as i64)
    }
}
impl From<bool> for Node {
    fn from(v: bool) -> Self {
        Node::Bool(v)
    }
}
impl From<&str> for Node {
    fn from(v: &str) -> Self {
        Node::Str(v.to_string())
    }
}
impl From<String> for Node {
    fn from(v: String) -> Self {
        Node::Str(v)
    }
}
impl<T: Into<Node>> From<Option<T>> for Node {
    fn from(v: Option<T>) -> Self {
        v.map_or(Node::Null, Into::into)
    }
}
impl<T: Into<Node>> From<Vec<T>> for Node {
    fn from(v: Vec<T>) -> Self {
        Node::List(v.into_iter().map(Into::into).collect())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Where the analysed data came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub input_sha256: String,
    pub tool_version: String,
    pub policy: LocalFieldPolicy,
    pub seed: Option<u64>,
    pub origin_hz: f64,
    pub dwell: f64,
}

fn policy_node(policy: &LocalFieldPolicy) -> Node {
    Node::map()
        .with("local_field", policy.mode.as_str())
        .with("epsilon", policy.epsilon)
        .with("factor", policy.factor())
}

fn fit_node(fit: &StarkFit) -> Node {
    let cov: Vec<Node> = fit.covariance.iter().map(|row| Node::from(row.to_vec())).collect();
    Node::map()
        .with("nu0_hz", fit.nu0)
        .with("a_hz_per_v_per_m", fit.a)
        .with("b_hz_per_v2_per_m2", fit.b)
        .with("covariance", Node::List(cov))
        .with("delta_mu_debye", fit.delta_mu)
        .with("delta_alpha_angstrom3", fit.delta_alpha)
        .with("regime", fit.regime.as_str())
        .with("reduced_chi2", fit.reduced_chi2)
        .with("n_points", fit.n_points)
        .with("field_span_v_per_m", fit.field_span)
}

fn summary_node(s: &PopulationSummary) -> Node {
    let stats = |o: &crate::estimate::OrderStats| {
        Node::map().with("min", o.min).with("max", o.max).with("median", o.median)
    };
    Node::map()
        .with("count", s.count)
        .with("delta_mu_debye", stats(&s.delta_mu))
        .with("delta_alpha_angstrom3", stats(&s.delta_alpha))
        .with(
            "regimes",
            Node::map()
                .with("linear", s.linear)
                .with("quadratic", s.quadratic)
                .with("mixed", s.mixed),
        )
}

pub fn manifest_node(analysis: &Analysis, config: &AnalysisConfig, provenance: &Provenance, frames: usize) -> Node {
    let trails: Vec<Node> = analysis
        .trails
        .iter()
        .map(|t| {
            let points: Vec<Node> = t
                .trail
                .points
                .iter()
                .map(|p| {
                    Node::from(vec![
                        Node::Int(p.step_index as i64),
                        Node::Float(p.applied_field),
                        Node::Float(p.fit.center),
                        Node::Float(p.fit.center_std()),
                        Node::Float(p.fit.fwhm),
                        Node::Float(p.fit.amplitude),
                    ])
                })
                .collect();
            Node::map()
                .with("id", t.trail.id)
                .with("n_points", t.trail.points.len())
                .with("fit", t.fit.as_ref().map_or(Node::Null, fit_node))
                .with(
                    "point_columns",
                    Node::from(vec![
                        "step_index",
                        "applied_field_v_per_m",
                        "center_hz",
                        "center_std_hz",
                        "fwhm_hz",
                        "amplitude_counts_per_s",
                    ]),
                )
                .with("points", Node::List(points))
        })
        .collect();
    Node::map()
        .with("format", MANIFEST_FORMAT)
        .with("version", MANIFEST_VERSION)
        .with(
            "provenance",
            Node::map()
                .with("input_sha256", provenance.input_sha256.as_str())
                .with("tool_version", provenance.tool_version.as_str())
                .with("policy", policy_node(&provenance.policy))
                .with("seed", provenance.seed)
                .with("origin_hz", provenance.origin_hz)
                .with("dwell_s", provenance.dwell),
        )
        .with(
            "settings",
            Node::map()
                .with("min_snr", config.min_snr)
                .with("min_separation_hz", config.min_separation)
                .with("gate_hz", analysis.gate)
                .with("max_missing", config.max_missing)
                .with("min_trail_points", config.min_trail_points)
                .with("window_fwhms", config.window_fwhms),
        )
        .with(
            "diagnostics",
            Node::map()
                .with("frames", frames)
                .with("peaks_detected", analysis.peaks_detected)
                .with("peaks_fitted", analysis.peaks_converged)
                .with("trails", analysis.trails.len())
                .with("stark_fits", analysis.fits().count())
                .with("warnings", analysis.warnings.clone()),
        )
        .with("trails", Node::List(trails))
        .with("summary", analysis.summary.as_ref().map_or(Node::Null, summary_node))
}

pub fn render_manifest(analysis: &Analysis, config: &AnalysisConfig, provenance: &Provenance, frames: usize) -> String {
    manifest_node(analysis, config, provenance, frames).render()
}

/// The parts of a manifest the tuner needs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestDoc {
    pub format: String,
    pub version: u32,
    pub provenance: ManifestProvenance,
    pub trails: Vec<ManifestTrail>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestProvenance {
    pub policy: ManifestPolicy,
    pub origin_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestPolicy {
    pub local_field: String,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestTrail {
    pub id: usize,
    pub fit: Option<ManifestFit>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestFit {
    pub nu0_hz: f64,
    pub a_hz_per_v_per_m: f64,
    pub b_hz_per_v2_per_m2: f64,
    pub delta_mu_debye: f64,
    pub delta_alpha_angstrom3: f64,
    pub regime: String,
}

pub fn read_manifest(text: &str) -> Result<ManifestDoc> {
    let doc: ManifestDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("manifest: {e}"),
    })?;
    if doc.format != MANIFEST_FORMAT {
        return Err(Error::Parse {
            line: 1,
            message: format!("not a fit manifest (format `{}`)", doc.format),
        });
    }
    Ok(doc)
}
