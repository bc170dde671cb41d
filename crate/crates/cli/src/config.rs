//! Experiment configuration: one flat JSON object.

use std::path::{Path, PathBuf};

use memwave_core::{CoefficientField, Family, GridSpec, MemoryKernel};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

/// Which connecting kernel feeds the Gelfand–Levitan solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DataPath {
    /// Boundary response data only.
    #[default]
    Response,
    /// The Duhamel kernel of the true potential (oracle).
    #[value(name = "w_oracle", alias = "w-oracle")]
    WOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    None,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub cells: usize,
    pub q_family: String,
    #[serde(default)]
    pub q_params: Vec<f64>,
    #[serde(rename = "K_family")]
    pub k_family: String,
    #[serde(rename = "K_params", default)]
    pub k_params: Vec<f64>,
    #[serde(default)]
    pub path: DataPath,
    #[serde(default)]
    pub noise: Noise,
    /// Standard deviation of the noise added to each response sample.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.q_family()?;
        self.k_family()?;
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if self.noise == Noise::Gaussian && self.noise_sigma == 0.0 {
            return bad("gaussian noise needs noise_sigma > 0");
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return bad("ridge must be finite and non-negative");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.horizon, self.cells).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn q_family(&self) -> Result<Family> {
        Family::parse(&self.q_family, &self.q_params).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn k_family(&self) -> Result<Family> {
        Family::parse(&self.k_family, &self.k_params).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn potential(&self, grid: GridSpec) -> Result<CoefficientField> {
        CoefficientField::from_family(grid, &self.q_family()?)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn kernel(&self, grid: GridSpec) -> Result<MemoryKernel> {
        MemoryKernel::from_family(grid, &self.k_family()?)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Same experiment at another resolution.
    pub fn with_cells(&self, cells: usize) -> Self {
        Self {
            cells,
            ..self.clone()
        }
    }
}
