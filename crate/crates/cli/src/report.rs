use serde::{Deserialize, Serialize};

use crate::config::{DataPath, ExperimentConfig};
use crate::io::GridJson;

/// Bumped whenever a field of [`RunReport`] changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max |z(x, x) - ½∫q|` against the configured potential.
    pub diagonal: f64,
    /// Asymmetry of the probe Galerkin matrix at kernel scale; response path only.
    pub psi_consistency: Option<f64>,
    /// Largest Gelfand–Levitan equation residual over all columns.
    pub gl_residual: f64,
    pub operator_identity: f64,
}

/// Reconstruction errors on the window `[0.1 T, 0.9 T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowErrors {
    pub l2_relative: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Resolutions the measurements were taken at.
    pub cells: Vec<usize>,
    pub measured: Vec<f64>,
    /// Observed order between the two finest resolutions, when meaningful.
    pub order: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub grid: GridJson,
    pub path: DataPath,
    pub residuals: Option<Residuals>,
    pub errors: Option<WindowErrors>,
    pub max_condition: Option<f64>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn failed_checks(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }
}

/// Wall-clock seconds per stage, kept apart from the deterministic report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.stages
            .push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}
