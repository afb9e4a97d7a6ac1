//! Discrete-time double integrator with linear drag.
//!
//! State `[p, v]`, input a force per axis:
//!
//! ```text
//! p' = p + dt·v
//! v' = ρ·v + ξ·u,   ξ = dt / m
//! ```

use std::fmt;

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Force command (N) per axis.
pub type Control = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent left the workspace along {axis}: {value} not in [{min}, {max}]")]
    OutOfWorkspace {
        axis: Axis,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid agent parameter: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl AgentState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        AgentState {
            position,
            velocity: Vector3::zeros(),
        }
    }

    pub fn altitude(&self) -> f64 {
        self.position.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub dt: f64,
    /// Per-step velocity retention in [0, 1].
    pub rho: f64,
    pub mass: f64,
}

impl DynamicsParams {
    pub fn new(dt: f64, rho: f64, mass: f64) -> Result<Self, AgentError> {
        let params = DynamicsParams { dt, rho, mass };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(AgentError::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(AgentError::Invalid(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(AgentError::Invalid(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Force-to-velocity gain ξ = dt/m.
    pub fn xi(&self) -> f64 {
        self.dt / self.mass
    }
}

pub fn build_dynamics(params: &DynamicsParams) -> (Matrix6<f64>, Matrix6x3<f64>) {
    let eye = Matrix3::<f64>::identity();
    let mut a = Matrix6::<f64>::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&eye);
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(eye * params.dt));
    a.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(eye * params.rho));
    let mut b = Matrix6x3::<f64>::zeros();
    b.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(eye * params.xi()));
    (a, b)
}

/// Axis-aligned box the agent must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            min: Vector3::new(-2000.0, -2000.0, 5.0),
            max: Vector3::new(2000.0, 2000.0, 150.0),
        }
    }
}

impl Workspace {
    pub fn check(&self, p: &Vector3<f64>) -> Result<(), AgentError> {
        for axis in Axis::ALL {
            let i = axis.index();
            let (min, max) = (self.min[i], self.max[i]);
            if !(p[i] >= min && p[i] <= max) {
                return Err(AgentError::OutOfWorkspace {
                    axis,
                    value: p[i],
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.check(p).is_ok()
    }
}

/// Kinematic limits of the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    /// Horizontal speed limit per axis (m/s).
    pub v_h_max: f64,
    /// Vertical speed limit (m/s).
    pub v_v_max: f64,
    /// Acceleration limit on every axis (m/s²).
    pub a_max: f64,
    /// Largest per-step force change as a fraction of the force limit.
    pub smoothing_fraction: f64,
    pub workspace: Workspace,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            v_h_max: 11.0,
            v_v_max: 3.0,
            a_max: 2.0,
            smoothing_fraction: 0.5,
            workspace: Workspace::default(),
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), AgentError> {
        for (name, v) in [
            ("v_h_max", self.v_h_max),
            ("v_v_max", self.v_v_max),
            ("a_max", self.a_max),
            ("smoothing_fraction", self.smoothing_fraction),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AgentError::Invalid(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let ws = &self.workspace;
        if !(0..3).all(|i| ws.min[i].is_finite() && ws.max[i].is_finite() && ws.min[i] < ws.max[i])
        {
            return Err(AgentError::Invalid(
                "workspace min must be below max on every axis".into(),
            ));
        }
        Ok(())
    }

    pub fn velocity_bound(&self) -> Vector3<f64> {
        Vector3::new(self.v_h_max, self.v_h_max, self.v_v_max)
    }

    pub fn velocity_ok(&self, v: &Vector3<f64>) -> bool {
        let bound = self.velocity_bound();
        (0..3).all(|i| v[i].abs() <= bound[i] + VELOCITY_SLACK)
    }

    /// Force box U and smoothing box δU for an airframe of the given mass.
    pub fn control_bounds(&self, mass: f64) -> ControlBounds {
        let u = self.a_max * mass;
        let step = self.smoothing_fraction * u;
        ControlBounds {
            u_max: Vector3::repeat(u),
            du_sq_max: Vector3::repeat(step * step),
        }
    }
}

/// Rounding slack on the velocity check; the bounds are physical, not exact.
const VELOCITY_SLACK: f64 = 1e-9;

/// `|u_i| ≤ u_max_i` and `(u_i - prev_i)² ≤ du_sq_max_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub u_max: Vector3<f64>,
    pub du_sq_max: Vector3<f64>,
}

impl ControlBounds {
    pub fn admits(&self, u: &Control, prev: &Control) -> bool {
        (0..3).all(|i| u[i].abs() <= self.u_max[i] && (u[i] - prev[i]).powi(2) <= self.du_sq_max[i])
    }

    /// Largest allowed absolute change per axis.
    pub fn max_step(&self) -> Vector3<f64> {
        self.du_sq_max.map(f64::sqrt)
    }
}

/// Projects `raw` onto U, then pulls it towards `prev` until the smoothing
/// bound holds. `prev` is assumed to already lie in U.
pub fn clamp_control(raw: &Control, prev: &Control, bounds: &ControlBounds) -> Control {
    let step = bounds.max_step();
    Control::from_fn(|i, _| {
        let u = raw[i].clamp(-bounds.u_max[i], bounds.u_max[i]);
        let mut out = prev[i] + (u - prev[i]).clamp(-step[i], step[i]);
        // prev + step can overshoot by one ulp; the squared check must hold.
        while (out - prev[i]).powi(2) > bounds.du_sq_max[i] {
            out = if out > prev[i] {
                out.next_down()
            } else {
                out.next_up()
            };
        }
        out
    })
}

/// `A·χ + B·u` without any bound checks.
pub fn propagate(state: &AgentState, u: &Control, params: &DynamicsParams) -> AgentState {
    AgentState {
        position: state.position + state.velocity * params.dt,
        velocity: state.velocity * params.rho + u * params.xi(),
    }
}

pub fn step_agent(
    state: &AgentState,
    u: &Control,
    params: &DynamicsParams,
    workspace: &Workspace,
) -> Result<AgentState, AgentError> {
    let next = propagate(state, u, params);
    workspace.check(&next.position)?;
    Ok(next)
}

/// Narrows `u` so the next velocity stays inside the speed limits.
/// Used by the scripted baselines, which have no look-ahead.
pub fn limit_for_velocity(
    u: &Control,
    state: &AgentState,
    params: &DynamicsParams,
    limits: &Limits,
) -> Control {
    let bound = limits.velocity_bound();
    let xi = params.xi();
    Control::from_fn(|i, _| {
        let drift = params.rho * state.velocity[i];
        let lo = (-bound[i] - drift) / xi;
        let hi = (bound[i] - drift) / xi;
        if lo <= hi {
            u[i].clamp(lo, hi)
        } else {
            u[i]
        }
    })
}
