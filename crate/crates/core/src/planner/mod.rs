//! Receding-horizon planning over the summed covariance traces.
//!
//! Every binary of the mixed-integer formulation (in-footprint checks and
//! their conjunction) is a deterministic function of the control sequence,
//! and the Kalman covariance recursion does not depend on measurement
//! values. The objective is therefore an exactly computable function of the
//! controls, evaluated by [`rollout`]. [`plan`] searches it with a seeded
//! cross-entropy method; [`exhaustive_lattice`] enumerates a discretised
//! control set and serves as the reference optimum.

mod lattice;
mod mpc;
mod optimizer;
mod rollout;

use std::cmp::Ordering;

pub use lattice::{
    exhaustive_lattice, lattice_levels, lattice_size, snap_to_lattice, MAX_LATTICE_SEQUENCES,
};
pub use mpc::{MpcController, MpcStep};
pub use optimizer::{initial_mean, plan, zero_plan_controls};
pub use rollout::{
    inclusion_probability, rollout, rollout_with, Infeasibility, Rollout, RolloutOptions,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Control, ControlBounds, DynamicsParams, Limits};
use crate::estimator::FilterParams;
use crate::sensor::SensorConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("invalid planner configuration: {0}")]
    Config(String),
    #[error("planning needs at least one target")]
    NoTargets,
    #[error("lattice has {size} sequences, above the limit of {limit}")]
    LatticeTooLarge { size: f64, limit: f64 },
}

/// Everything the rollout needs to know about the physical system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingModel {
    pub dynamics: DynamicsParams,
    pub limits: Limits,
    pub bounds: ControlBounds,
    pub sensor: SensorConfig,
    pub filter: FilterParams,
}

impl TrackingModel {
    pub fn new(
        dynamics: DynamicsParams,
        limits: Limits,
        sensor: SensorConfig,
        filter: FilterParams,
    ) -> Self {
        TrackingModel {
            dynamics,
            limits,
            bounds: limits.control_bounds(dynamics.mass),
            sensor,
            filter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    /// Initial sampling std per axis as a fraction of the force limit.
    pub initial_std_fraction: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population: 64,
            elite_fraction: 0.125,
            iterations: 8,
            initial_std_fraction: 0.5,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).ceil() as usize).max(1)
    }
}

/// How the rollout decides that a target is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inclusion {
    /// Observed with certainty when the predicted mean is in the footprint.
    Mean,
    /// Every target is observed with weight `q = p(z) · P(target in
    /// footprint)` under its predicted Gaussian, applied as an update with
    /// noise variance `σ²/q`.
    #[default]
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub optimizer: OptimizerConfig,
    /// Levels per axis of the verification lattice.
    pub lattice_levels: usize,
    #[serde(default)]
    pub inclusion: Inclusion,
    /// Perturb rollout pseudo-measurements with their noise instead of
    /// using the predicted position itself.
    #[serde(default)]
    pub pseudo_noise: bool,
    /// Snap every optimizer candidate onto the verification lattice.
    #[serde(default)]
    pub snap_to_lattice: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 5,
            optimizer: OptimizerConfig::default(),
            lattice_levels: 3,
            inclusion: Inclusion::Expected,
            pseudo_noise: false,
            snap_to_lattice: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let o = &self.optimizer;
        if self.horizon == 0 {
            return Err(PlannerError::Config("horizon must be at least 1".into()));
        }
        if !(o.elite_fraction > 0.0 && o.elite_fraction <= 1.0) {
            return Err(PlannerError::Config(format!(
                "elite_fraction must lie in (0, 1], got {}",
                o.elite_fraction
            )));
        }
        if o.population < 2 * o.elite_count() {
            return Err(PlannerError::Config(format!(
                "population {} must be at least twice the elite count {}",
                o.population,
                o.elite_count()
            )));
        }
        if !(o.initial_std_fraction > 0.0 && o.initial_std_fraction.is_finite()) {
            return Err(PlannerError::Config(
                "initial_std_fraction must be positive".into(),
            ));
        }
        if self.lattice_levels == 0 {
            return Err(PlannerError::Config(
                "lattice_levels must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Output of one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub controls: Vec<Control>,
    /// Summed predicted traces; infinite if the sequence is infeasible.
    pub cost: f64,
    /// `predicted_traces[τ][i]`: trace of target `i` after step `τ`.
    pub predicted_traces: Vec<Vec<f64>>,
    /// `binaries[τ][i]`: predicted mean of target `i` inside the footprint
    /// at step `τ`.
    pub binaries: Vec<Vec<bool>>,
    /// No feasible candidate was found; this is the clamped zero plan.
    pub fallback: bool,
    /// Number of rollouts evaluated.
    pub evaluations: usize,
}

impl Plan {
    pub(crate) fn from_rollout(controls: Vec<Control>, r: Rollout, evaluations: usize) -> Self {
        Plan {
            controls,
            cost: r.cost,
            predicted_traces: r.traces,
            binaries: r.binaries,
            fallback: false,
            evaluations,
        }
    }

    pub fn first_control(&self) -> Control {
        self.controls
            .first()
            .copied()
            .unwrap_or_else(Control::zeros)
    }
}

pub(crate) fn squared_norm(controls: &[Control]) -> f64 {
    controls.iter().map(|u| u.norm_squared()).sum()
}

/// Total order on candidates: cost, then total squared control, then
/// lexicographic on the flattened sequence.
pub(crate) fn candidate_order(a_cost: f64, a: &[Control], b_cost: f64, b: &[Control]) -> Ordering {
    a_cost
        .total_cmp(&b_cost)
        .then_with(|| squared_norm(a).total_cmp(&squared_norm(b)))
        .then_with(|| {
            a.iter()
                .flat_map(|u| u.iter())
                .zip(b.iter().flat_map(|u| u.iter()))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}
