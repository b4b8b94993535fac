//! Stark-shift spectroscopy of single optical defect centers.
//!
//! The crate simulates fluorescence-excitation scans of individual emitters
//! while an applied electric field is stepped, recovers each emitter's
//! dipole-moment change Δμ and polarizability change Δα from the resulting
//! spectral trails, and plans bias fields that bring two lines (or a line and
//! a fixed target) into resonance.
//!
//! - [`units`]: constants, debye / Å³ conversions, local-field policy
//! - [`stark_model`]: second-order Stark shift, doublet splitting, parameter conversion
//! - [`spectra`]: scan and sweep synthesis with shot noise, diffusion and quenching
//! - [`estimate`]: peak detection, Lorentzian fits, trail linking, Stark regression
//! - [`tuner`]: resonance bias-field planning
//! - [`io`]: trail CSV, fit manifest and scenario configuration formats

pub mod cli;
pub mod error;
pub mod estimate;
pub mod io;
mod linalg;
pub mod spectra;
pub mod stark_model;
pub mod tuner;
pub mod units;

pub use error::{Error, Result};
