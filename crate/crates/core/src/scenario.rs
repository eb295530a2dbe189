//! Scenario files: everything needed to reproduce one run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{LONG_WINDOW, SHORT_WINDOW};
use crate::bench::BenchConfig;
use crate::pipeline::RfChainConfig;
use crate::synth::record_count;
use crate::trajectory::TrajectorySpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Baseband,
    Rf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringChoice {
    /// Known mean for moving trajectories, sample mean for a zero displacement.
    #[default]
    Auto,
    KnownMean,
    SampleMean,
}

fn default_window() -> usize {
    LONG_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub centering: CenteringChoice,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            window: default_window(),
            centering: CenteringChoice::Auto,
        }
    }
}

fn default_calibration_duration() -> f64 {
    0.1
}

/// Shot-noise calibration source for the RF tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationOptions {
    /// Length of the vacuum run, seconds.
    #[serde(default = "default_calibration_duration")]
    pub duration: f64,
    /// Previously written calibration.json; skips the vacuum run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            duration: default_calibration_duration(),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Raw,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceOutput {
    pub path: PathBuf,
    pub format: TraceFormat,
}

fn default_records() -> PathBuf {
    "records.csv".into()
}
fn default_summary() -> PathBuf {
    "summary.json".into()
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_records")]
    pub records: PathBuf,
    #[serde(default = "default_summary")]
    pub summary: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fir_taps: Option<PathBuf>,
    /// RF tier only: the full-rate photocurrents of the first repeat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceOutput>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            records: default_records(),
            summary: default_summary(),
            windows: None,
            residuals: None,
            fir_taps: None,
            trace: None,
        }
    }
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bench: BenchConfig,
    pub trajectory: TrajectorySpec,
    pub tier: Tier,
    /// Measured span in seconds; records at `i * out_dt` for `i < round(duration / out_dt)`.
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub dsp: RfChainConfig,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub calibration: CalibrationOptions,
    /// Independent repetitions of the run, each with its own derived seed.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub outputs: Outputs,
}

fn schema_error(path: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.inner().to_string();
            // Point missing-field errors at the field itself.
            if let Some(field) = message
                .strip_prefix("missing field `")
                .and_then(|rest| rest.split('`').next())
            {
                path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            }
            schema_error(&path, message)
        })?;
        scenario.check_structure()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Checks that do not involve the physics: versions, spans and record counts.
    fn check_structure(&self) -> Result<(), ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return Err(schema_error(
                "schema",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(schema_error("duration", "must be positive"));
        }
        if self.trajectory.duration < self.duration {
            return Err(schema_error(
                "trajectory.duration",
                format!("must cover the run duration {}", self.duration),
            ));
        }
        if !(self.dsp.demod.out_dt > 0.0) {
            return Err(schema_error("dsp.demod.out_dt", "must be positive"));
        }
        let n = self.record_count();
        if n < SHORT_WINDOW {
            return Err(schema_error(
                "duration",
                format!("gives {n} records; analysis needs at least {SHORT_WINDOW}"),
            ));
        }
        if self.analysis.window < 2 || self.analysis.window > n {
            return Err(schema_error(
                "analysis.window",
                format!("must lie between 2 and the record count {n}"),
            ));
        }
        if self.repeats == 0 {
            return Err(schema_error("repeats", "must be at least 1"));
        }
        if !(self.calibration.duration > 0.0) {
            return Err(schema_error("calibration.duration", "must be positive"));
        }
        Ok(())
    }

    /// Record spacing of both tiers.
    pub fn dt(&self) -> f64 {
        self.dsp.demod.out_dt
    }

    pub fn record_count(&self) -> usize {
        record_count(self.duration, self.dt())
    }

    pub fn known_mean(&self) -> bool {
        match self.analysis.centering {
            CenteringChoice::Auto => !self.trajectory.is_zero(),
            CenteringChoice::KnownMean => true,
            CenteringChoice::SampleMean => false,
        }
    }
}
