use thiserror::Error;

use crate::agent::AgentError;
use crate::config::ConfigError;
use crate::estimator::EstimatorError;
use crate::planner::PlannerError;
use crate::sensor::{FitError, SensorError};
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("{0}")]
    Precondition(String),
    #[error("problem too large: {0}")]
    Size(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
