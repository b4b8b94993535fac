//! File formats: trail CSV, fit manifest, scenario configuration.

pub mod config;
pub mod csv;
pub mod manifest;
