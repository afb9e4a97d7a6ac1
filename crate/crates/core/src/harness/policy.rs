use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::agent::{clamp_control, limit_for_velocity, AgentState, Control, Limits};
use crate::planner::TrackingModel;

/// Who flies the agent during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Receding-horizon planner.
    Mpc,
    /// Fly to the centroid of the radar fixes and hold altitude.
    Hover { altitude: f64 },
    /// Boustrophedon sweep over the bounding box of the radar fixes.
    Lawnmower {
        altitude: f64,
        /// Distance between legs (m); `None` uses the footprint's short side.
        #[serde(default)]
        spacing: Option<f64>,
        /// Horizontal cruise speed (m/s).
        speed: f64,
        /// Padding added around the bounding box (m).
        margin: f64,
    },
    /// Hold still with the camera off; beliefs only predict.
    OpenLoop,
}

impl Policy {
    pub const DEFAULT_HOVER_ALTITUDE: f64 = 100.0;

    pub fn lawnmower() -> Policy {
        Policy::Lawnmower {
            altitude: 40.0,
            spacing: None,
            speed: 5.0,
            margin: 25.0,
        }
    }

    pub fn uses_camera(&self) -> bool {
        !matches!(self, Policy::OpenLoop)
    }

    /// Checks the scripted parameters against the airframe limits.
    pub fn validate(&self, limits: &Limits) -> Result<(), String> {
        let ws = &limits.workspace;
        let altitude_ok = |z: f64| z >= ws.min.z && z <= ws.max.z;
        match *self {
            Policy::Mpc | Policy::OpenLoop => Ok(()),
            Policy::Hover { altitude } if !altitude_ok(altitude) => Err(format!(
                "hover altitude {altitude} is outside the workspace"
            )),
            Policy::Hover { .. } => Ok(()),
            Policy::Lawnmower {
                altitude,
                spacing,
                speed,
                margin,
            } => {
                if !altitude_ok(altitude) {
                    return Err(format!(
                        "lawnmower altitude {altitude} is outside the workspace"
                    ));
                }
                if !(speed > 0.0 && speed <= limits.v_h_max) {
                    return Err(format!(
                        "lawnmower speed must lie in (0, {}], got {speed}",
                        limits.v_h_max
                    ));
                }
                if spacing.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
                    return Err("lawnmower spacing must be positive".into());
                }
                if !(margin >= 0.0 && margin.is_finite()) {
                    return Err("lawnmower margin must be non-negative".into());
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Mpc => write!(f, "mpc"),
            Policy::Hover { altitude } => write!(f, "hover:{altitude}"),
            Policy::Lawnmower { altitude, .. } => write!(f, "lawnmower:{altitude}"),
            Policy::OpenLoop => write!(f, "openloop"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    /// `mpc`, `hover[:Z]`, `lawnmower[:Z]` or `openloop`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let altitude = |default: f64| -> Result<f64, String> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|z| z.is_finite())
                    .ok_or_else(|| format!("bad altitude `{a}` in policy `{s}`")),
            }
        };
        match name {
            "mpc" if arg.is_none() => Ok(Policy::Mpc),
            "openloop" if arg.is_none() => Ok(Policy::OpenLoop),
            "hover" => Ok(Policy::Hover {
                altitude: altitude(Policy::DEFAULT_HOVER_ALTITUDE)?,
            }),
            "lawnmower" => match Policy::lawnmower() {
                Policy::Lawnmower {
                    altitude: z,
                    spacing,
                    speed,
                    margin,
                } => Ok(Policy::Lawnmower {
                    altitude: altitude(z)?,
                    spacing,
                    speed,
                    margin,
                }),
                _ => unreachable!(),
            },
            _ => Err(format!(
                "unknown policy `{s}`; expected mpc, hover:Z, lawnmower[:Z] or openloop"
            )),
        }
    }
}

/// Proportional gain from position error to commanded velocity (1/s).
const POSITION_GAIN: f64 = 0.3;
/// Deceleration assumed by the braking profile (m/s²).
const BRAKING: f64 = 0.3;
/// Largest commanded velocity change per step (m/s). Small enough that
/// the smoothing bound never clips the command, so the agent cannot
/// overshoot the speed limits.
const MAX_DV: f64 = 0.4;
/// A waypoint counts as reached inside this planar radius (m).
const WAYPOINT_RADIUS: f64 = 3.0;

/// Speed towards a point `dist` away: proportional near it, capped by a
/// braking profile and by `cap`.
fn approach_speed(dist: f64, cap: f64) -> f64 {
    (POSITION_GAIN * dist)
        .min((2.0 * BRAKING * dist).sqrt())
        .min(cap)
}

/// Waypoint follower shared by the scripted baselines: a rate-limited
/// velocity command, inverted through one step of the dynamics and then
/// made admissible.
#[derive(Debug, Clone)]
pub(crate) struct WaypointFollower {
    waypoints: Vec<Vector3<f64>>,
    next: usize,
    speed: f64,
}

impl WaypointFollower {
    pub fn hover(center: Vector2<f64>, altitude: f64, limits: &Limits) -> Self {
        WaypointFollower {
            waypoints: vec![Vector3::new(center.x, center.y, altitude)],
            next: 0,
            speed: limits.v_h_max,
        }
    }

    /// Legs run along x and step along y; the path is flown forwards then
    /// backwards indefinitely.
    pub fn lawnmower(
        lo: Vector2<f64>,
        hi: Vector2<f64>,
        altitude: f64,
        spacing: f64,
        speed: f64,
    ) -> Self {
        let legs = (((hi.y - lo.y) / spacing).ceil() as usize).max(1);
        let mut forward = Vec::with_capacity(2 * (legs + 1));
        for k in 0..=legs {
            let y = (lo.y + k as f64 * spacing).min(hi.y);
            let (a, b) = if k % 2 == 0 {
                (lo.x, hi.x)
            } else {
                (hi.x, lo.x)
            };
            forward.push(Vector3::new(a, y, altitude));
            forward.push(Vector3::new(b, y, altitude));
        }
        let mut waypoints = forward.clone();
        waypoints.extend(
            forward
                .iter()
                .rev()
                .skip(1)
                .take(forward.len().saturating_sub(2)),
        );
        WaypointFollower {
            waypoints,
            next: 0,
            speed,
        }
    }

    pub fn control(
        &mut self,
        agent: &AgentState,
        prev: &Control,
        model: &TrackingModel,
    ) -> Control {
        if self.waypoints.len() > 1 {
            let wp = self.waypoints[self.next];
            if (wp.xy() - agent.position.xy()).norm() < WAYPOINT_RADIUS {
                self.next = (self.next + 1) % self.waypoints.len();
            }
        }
        let wp = self.waypoints[self.next];
        let limits = &model.limits;
        let err = wp - agent.position;
        let d_h = err.xy().norm();
        let v_h = if d_h > 0.0 {
            err.xy() * (approach_speed(d_h, self.speed.min(limits.v_h_max)) / d_h)
        } else {
            Vector2::zeros()
        };
        let v_z = approach_speed(err.z.abs(), limits.v_v_max).copysign(err.z);
        let v = agent.velocity;
        let mut dv_h = v_h - v.xy();
        if dv_h.norm() > MAX_DV {
            dv_h *= MAX_DV / dv_h.norm();
        }
        let dv_z = (v_z - v.z).clamp(-MAX_DV, MAX_DV);
        let v_cmd = v + Vector3::new(dv_h.x, dv_h.y, dv_z);

        let dyn_ = &model.dynamics;
        let raw = (v_cmd - v * dyn_.rho) / dyn_.xi();
        let raw = limit_for_velocity(&raw, agent, dyn_, limits);
        clamp_control(&raw, prev, &model.bounds)
    }
}
