//! The single JSON document every command reads.
//!
//! Sections other than `scenario` may be omitted and take their defaults;
//! inside a section every field is required and unknown keys are errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{DynamicsParams, Limits};
use crate::estimator::{FilterParams, FilterSettings};
use crate::harness::{MonteCarloConfig, TimingConfig};
use crate::planner::{PlannerConfig, TrackingModel};
use crate::sensor::SensorConfig;
use crate::world::{ScenarioConfig, ScenarioGenerator, DEFAULT_SCENARIO_SEED};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema_version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

/// Airframe constants; the step interval comes from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    /// Velocity retention per step (drag), in [0, 1].
    pub rho: f64,
    /// Mass (kg).
    pub mass: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            rho: 0.95,
            mass: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub agent: AgentParams,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub timing: TimingConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config::with_scenario(ScenarioGenerator::default().generate(DEFAULT_SCENARIO_SEED))
    }
}

impl Config {
    pub fn with_scenario(scenario: ScenarioConfig) -> Self {
        Config {
            schema_version: SCHEMA_VERSION,
            scenario,
            agent: AgentParams::default(),
            limits: Limits::default(),
            sensor: SensorConfig::default(),
            filter: FilterSettings::default(),
            planner: PlannerConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            timing: TimingConfig::default(),
        }
    }

    /// Parses and validates. Errors carry the JSON path of the offending
    /// field, plus line and column for syntax errors.
    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn dynamics(&self) -> Result<DynamicsParams, ConfigError> {
        DynamicsParams::new(self.scenario.dt, self.agent.rho, self.agent.mass)
            .map_err(|e| ConfigError::invalid("agent", e))
    }

    pub fn filter_params(&self) -> Result<FilterParams, ConfigError> {
        FilterParams::from_settings(self.scenario.dt, &self.filter)
            .map_err(|e| ConfigError::invalid("filter", e))
    }

    pub fn model(&self) -> Result<TrackingModel, ConfigError> {
        Ok(TrackingModel::new(
            self.dynamics()?,
            self.limits,
            self.sensor,
            self.filter_params()?,
        ))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        self.scenario
            .validate()
            .map_err(|e| ConfigError::invalid("scenario", e))?;
        self.limits
            .validate()
            .map_err(|e| ConfigError::invalid("limits", e))?;
        let init = &self.scenario.agent_init;
        self.limits
            .workspace
            .check(&init.position)
            .map_err(|e| ConfigError::invalid("scenario.agent_init.position", e))?;
        if !self.limits.velocity_ok(&init.velocity) {
            return Err(ConfigError::invalid(
                "scenario.agent_init.velocity",
                "exceeds the speed limits",
            ));
        }
        self.sensor
            .validate()
            .map_err(|e| ConfigError::invalid("sensor", e))?;
        self.planner
            .validate()
            .map_err(|e| ConfigError::invalid("planner", e))?;
        self.model()?;
        self.monte_carlo
            .validate(&self.limits)
            .map_err(|(field, msg)| ConfigError::invalid(format!("monte_carlo.{field}"), msg))?;
        self.timing
            .validate()
            .map_err(|(field, msg)| ConfigError::invalid(format!("timing.{field}"), msg))?;
        Ok(())
    }
}
