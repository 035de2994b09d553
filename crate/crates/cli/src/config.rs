//! JSON run configuration. Every key is optional; physical quantities carry a
//! unit suffix. Command-line flags take precedence over the file.

use std::path::Path;

use pairlab_core::{CombSpec, Experiment, StrainModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub experiment: Experiment,
    pub comb: CombSpec,
    pub strain: StrainModel,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            experiment: Experiment::default(),
            comb: CombSpec::default(),
            strain: StrainModel::default(),
            analysis: AnalysisConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Full coincidence window.
    pub window_ns: f64,
    /// Window center relative to the herald; `None` locates the correlation peak.
    pub offset_ns: Option<f64>,
    pub bin_ps: u64,
    pub max_lag_ns: f64,
    pub eta_det: f64,
    /// Defaults to the source pump power.
    pub pump_mw: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { window_ns: 8.0, offset_ns: None, bin_ps: 162, max_lag_ns: 50.0, eta_det: 0.6, pump_mw: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Pair rates `R·P` in pairs/s.
    pub rates_per_s: Vec<f64>,
    /// Also store every grid point as a PTT1 file.
    pub write_streams: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { rates_per_s: vec![5e4, 1e5, 2.5e5, 5e5, 1e6], write_streams: false }
    }
}

impl RunConfig {
    /// Reads a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.experiment.validate().map_err(CliError::invalid_config)?;
        self.comb.validate().map_err(CliError::invalid_config)?;
        self.strain.validate().map_err(CliError::invalid_config)?;
        let a = &self.analysis;
        if !(a.window_ns.is_finite() && a.window_ns > 0.0) {
            return Err(CliError::config(format!("analysis.window_ns must be > 0, got {}", a.window_ns)));
        }
        if a.bin_ps == 0 || !(a.max_lag_ns.is_finite() && a.max_lag_ns * 1e3 >= a.bin_ps as f64) {
            return Err(CliError::config("analysis.max_lag_ns must cover at least one bin of analysis.bin_ps"));
        }
        if !(a.eta_det > 0.0 && a.eta_det <= 1.0) {
            return Err(CliError::config(format!("analysis.eta_det must lie in (0, 1], got {}", a.eta_det)));
        }
        if let Some(p) = a.pump_mw {
            if !(p.is_finite() && p > 0.0) {
                return Err(CliError::config(format!("analysis.pump_mw must be > 0, got {p}")));
            }
        }
        if self.sweep.rates_per_s.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(CliError::config("sweep.rates_per_s must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn pump_mw(&self) -> f64 {
        self.analysis.pump_mw.unwrap_or(self.experiment.source.pump_power_mw)
    }
}
