//! JSON configuration file with strict key checking and path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::calibration::{CalibrationError, CalibrationSettings};
use crate::compensation::CompensatorSettings;
use crate::control::ControlOptions;
use crate::harness::{ControlMode, ExperimentSpec, HarnessError, TrajectorySpec};
use crate::model::RobotParams;
use crate::plant::PlantSpec;

pub const SUPPORTED_SCHEMA_VERSIONS: &[&str] = &["1"];

fn default_schema_version() -> String {
    SUPPORTED_SCHEMA_VERSIONS[0].to_string()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: {1}")]
    Override(String, String),
    #[error("unsupported schema_version {found:?}; supported: {supported:?}")]
    SchemaVersion {
        found: String,
        supported: &'static [&'static str],
    },
    #[error("invalid config: {0}")]
    Validation(String),
}

/// Plant section; `true_params` defaults to the `robot` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_params: Option<RobotParams>,
    pub backlash_width_deg: f64,
    pub slack_per_tendon: Vec<f64>,
    pub sensor_noise_angle_deg: f64,
    pub sensor_noise_position_m: f64,
    pub seed: u64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            true_params: None,
            backlash_width_deg: 20.0,
            slack_per_tendon: Vec::new(),
            sensor_noise_angle_deg: 0.5,
            sensor_noise_position_m: 0.5e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub trajectory: TrajectorySpec,
    pub trials: usize,
    pub control_mode: ControlMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trajectory: TrajectorySpec::default(),
            trials: 3,
            control_mode: ControlMode::Redundant,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub control: ControlOptions,
    #[serde(default)]
    pub compensator: CompensatorSettings,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub calibration: CalibrationSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: default_schema_version(),
            robot: RobotParams::default(),
            plant: PlantSection::default(),
            control: ControlOptions::default(),
            compensator: CompensatorSettings::default(),
            experiment: ExperimentSection::default(),
            calibration: CalibrationSettings::default(),
        }
    }
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_value(serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?)
    }

    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        let cfg: Config =
            serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if !SUPPORTED_SCHEMA_VERSIONS.contains(&cfg.schema_version.as_str()) {
            return Err(ConfigError::SchemaVersion {
                found: cfg.schema_version,
                supported: SUPPORTED_SCHEMA_VERSIONS,
            });
        }
        Ok(cfg)
    }

    /// Read `path` (or start from defaults when `None`), apply `path=value`
    /// overrides in order, then parse and validate.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => Value::Object(Default::default()),
        };
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let cfg = Self::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn plant_spec(&self) -> PlantSpec {
        let p = &self.plant;
        PlantSpec {
            true_params: p.true_params.clone().unwrap_or_else(|| self.robot.clone()),
            backlash_width_deg: p.backlash_width_deg,
            slack_per_tendon: p.slack_per_tendon.clone(),
            sensor_noise_angle_deg: p.sensor_noise_angle_deg,
            sensor_noise_position_m: p.sensor_noise_position_m,
            seed: p.seed,
        }
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            trajectory: self.experiment.trajectory.clone(),
            trials: self.experiment.trials,
            plant: self.plant_spec(),
            controller_params: self.robot.clone(),
            control: self.control.clone(),
            compensator: self.compensator.clone(),
            control_mode: self.experiment.control_mode,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = |e: String| ConfigError::Validation(e);
        self.experiment_spec()
            .validate()
            .map_err(|e: HarnessError| v(e.to_string()))?;
        self.calibration
            .validate()
            .map_err(|e: CalibrationError| v(e.to_string()))?;
        Ok(())
    }
}

/// Set the value at a dotted path; dashes in keys read as underscores. The raw
/// value is parsed as JSON and falls back to a plain string.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |m: &str| ConfigError::Override(format!("{path}={raw}"), m.to_string());
    let keys: Vec<String> = path.split('.').map(|k| k.replace('-', "_")).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(err("empty key"));
    }
    let new_value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| err("path crosses a non-object value"))?;
        node = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| err("path crosses a non-object value"))?;
    obj.insert(keys[keys.len() - 1].clone(), new_value);
    Ok(())
}
