//! Ground-truth castaway drift.
//!
//! Each wave source pushes a castaway radially away from (or towards) its
//! origin with the small-amplitude Stokes velocity
//!
//! ```text
//! v = (ωH/2) · exp(-w·d) · sin(q·d - ω·t)
//! ```
//!
//! where `d` is the planar distance to the source. Contributions of several
//! sources are summed. The vertical channel receives the same speed, which
//! only matters for the exported truth: the estimator tracks (x, y) only.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentState;

/// Small-amplitude regime bound on `q·H`.
pub const MAX_STEEPNESS: f64 = 0.1;

/// Standard gravity, used when a configuration omits `gravity`.
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("wave parameter `{name}` out of domain: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("scenario rejected: {0}")]
    Rejected(String),
}

/// Quantities that follow from wavelength, depth and gravity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    /// q = 2π/L (rad/m)
    pub wave_number: f64,
    /// K = tanh(q·D)
    pub depth_factor: f64,
    /// T = sqrt(2πL / (g·K)) (s)
    pub period: f64,
    /// ω = 2π/T (rad/s)
    pub frequency: f64,
}

pub fn derive_wave_params(
    wavelength: f64,
    depth: f64,
    gravity: f64,
) -> Result<WaveParams, WorldError> {
    for (name, value) in [
        ("wavelength", wavelength),
        ("depth", depth),
        ("gravity", gravity),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(WorldError::Domain { name, value });
        }
    }
    let wave_number = 2.0 * PI / wavelength;
    let depth_factor = (wave_number * depth).tanh();
    let period = (2.0 * PI * wavelength / (gravity * depth_factor)).sqrt();
    let frequency = 2.0 * PI / period;
    Ok(WaveParams {
        wave_number,
        depth_factor,
        period,
        frequency,
    })
}

/// One wave train. Derived parameters are computed once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WaveSourceSpec", into = "WaveSourceSpec")]
pub struct WaveSource {
    origin: Vector2<f64>,
    height: f64,
    wavelength: f64,
    decay_rate: f64,
    depth: f64,
    gravity: f64,
    params: WaveParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaveSourceSpec {
    origin: [f64; 2],
    height: f64,
    wavelength: f64,
    decay_rate: f64,
    depth: f64,
    #[serde(default = "default_gravity")]
    gravity: f64,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl TryFrom<WaveSourceSpec> for WaveSource {
    type Error = WorldError;

    fn try_from(spec: WaveSourceSpec) -> Result<Self, Self::Error> {
        WaveSource::new(
            Vector2::from(spec.origin),
            spec.height,
            spec.wavelength,
            spec.decay_rate,
            spec.depth,
            spec.gravity,
        )
    }
}

impl From<WaveSource> for WaveSourceSpec {
    fn from(src: WaveSource) -> Self {
        WaveSourceSpec {
            origin: src.origin.into(),
            height: src.height,
            wavelength: src.wavelength,
            decay_rate: src.decay_rate,
            depth: src.depth,
            gravity: src.gravity,
        }
    }
}

impl WaveSource {
    /// Checks the parameter domain (`L, D, g > 0`, `H, w ≥ 0`). The wave
    /// regime is checked separately by [`WaveSource::check_regime`].
    pub fn new(
        origin: Vector2<f64>,
        height: f64,
        wavelength: f64,
        decay_rate: f64,
        depth: f64,
        gravity: f64,
    ) -> Result<Self, WorldError> {
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(WorldError::Domain {
                name: "origin",
                value: if origin.x.is_finite() {
                    origin.y
                } else {
                    origin.x
                },
            });
        }
        if !(height >= 0.0 && height.is_finite()) {
            return Err(WorldError::Domain {
                name: "height",
                value: height,
            });
        }
        if !(decay_rate >= 0.0 && decay_rate.is_finite()) {
            return Err(WorldError::Domain {
                name: "decay_rate",
                value: decay_rate,
            });
        }
        let params = derive_wave_params(wavelength, depth, gravity)?;
        Ok(WaveSource {
            origin,
            height,
            wavelength,
            decay_rate,
            depth,
            gravity,
            params,
        })
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn params(&self) -> &WaveParams {
        &self.params
    }

    /// q·H, the wave steepness.
    pub fn steepness(&self) -> f64 {
        self.params.wave_number * self.height
    }

    /// Peak speed ωH/2.
    pub fn speed_bound(&self) -> f64 {
        0.5 * self.params.frequency * self.height
    }

    /// Small-amplitude (`q·H < 0.1`) and deep-water (`0 < K < 1`) checks.
    ///
    /// `K` is compared in floating point, so a source whose `tanh(q·D)`
    /// rounds to exactly one is rejected.
    pub fn check_regime(&self) -> Result<(), WorldError> {
        let steepness = self.steepness();
        if !(steepness < MAX_STEEPNESS) {
            return Err(WorldError::Rejected(format!(
                "small-amplitude condition violated: q*H = {steepness} (must be < {MAX_STEEPNESS})"
            )));
        }
        let k = self.params.depth_factor;
        if !(k > 0.0 && k < 1.0) {
            return Err(WorldError::Rejected(format!(
                "deep-water condition violated: K = tanh(q*D) = {k} (must be in (0, 1))"
            )));
        }
        Ok(())
    }
}

/// Water speed along the propagation direction at planar distance `distance`
/// from the source, at step `step`.
pub fn stokes_velocity(src: &WaveSource, distance: f64, step: usize, dt: f64) -> f64 {
    let p = &src.params;
    let phase = p.wave_number * distance - p.frequency * step as f64 * dt;
    src.speed_bound() * (-src.decay_rate * distance).exp() * phase.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CastawayTruth {
    pub id: usize,
    pub position: Vector3<f64>,
}

/// Displacement over one step caused by a single source.
pub fn source_displacement(
    src: &WaveSource,
    position: &Vector3<f64>,
    step: usize,
    dt: f64,
) -> Vector3<f64> {
    let offset = position.xy() - src.origin;
    let distance = offset.norm();
    // Bearing is undefined on top of the source; use 0 there.
    let bearing = if distance > 0.0 {
        offset.y.atan2(offset.x)
    } else {
        0.0
    };
    let speed = stokes_velocity(src, distance, step, dt);
    Vector3::new(bearing.cos(), bearing.sin(), 1.0) * (speed * dt)
}

pub fn step_castaway(
    state: &CastawayTruth,
    sources: &[WaveSource],
    step: usize,
    dt: f64,
) -> CastawayTruth {
    let displacement: Vector3<f64> = sources
        .iter()
        .map(|src| source_displacement(src, &state.position, step, dt))
        .sum();
    CastawayTruth {
        id: state.id,
        position: state.position + displacement,
    }
}

/// Scenario-level inputs: who drifts where, under which waves, and where
/// the agent starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Number of simulation steps.
    pub duration: usize,
    /// Step interval (s).
    pub dt: f64,
    pub wave_sources: Vec<WaveSource>,
    pub initial_positions: Vec<Vector3<f64>>,
    /// Standard deviation of the one-shot radar fix (m).
    pub radar_sigma: f64,
    pub agent_init: AgentState,
}

impl ScenarioConfig {
    pub fn castaway_count(&self) -> usize {
        self.initial_positions.len()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.initial_positions.is_empty() {
            return Err(WorldError::Rejected(
                "at least one castaway is required".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(WorldError::Rejected(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.radar_sigma > 0.0 && self.radar_sigma.is_finite()) {
            return Err(WorldError::Rejected(format!(
                "radar_sigma must be positive, got {}",
                self.radar_sigma
            )));
        }
        if let Some(i) = self
            .initial_positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(WorldError::Rejected(format!(
                "initial_positions[{i}] is not finite"
            )));
        }
        for (i, src) in self.wave_sources.iter().enumerate() {
            src.check_regime()
                .map_err(|e| WorldError::Rejected(format!("wave_sources[{i}]: {e}")))?;
        }
        Ok(())
    }

    pub fn initial_truths(&self) -> Vec<CastawayTruth> {
        self.initial_positions
            .iter()
            .enumerate()
            .map(|(id, &position)| CastawayTruth { id, position })
            .collect()
    }

    /// Planar centroid of the initial castaway positions.
    pub fn centroid(&self) -> Vector2<f64> {
        let n = self.initial_positions.len().max(1) as f64;
        self.initial_positions
            .iter()
            .map(|p| p.xy())
            .sum::<Vector2<f64>>()
            / n
    }
}

/// Ground-truth table: `tracks[i][k]` is castaway `i` at step `k`, with
/// `k = 0` the initial position.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dt: f64,
    pub tracks: Vec<Vec<Vector3<f64>>>,
}

impl GroundTruth {
    pub fn steps(&self) -> usize {
        self.tracks.first().map_or(0, Vec::len)
    }

    /// Largest planar distance any castaway gets from its start.
    pub fn max_planar_displacement(&self) -> f64 {
        self.tracks
            .iter()
            .filter_map(|track| {
                let start = track.first()?.xy();
                Some(
                    track
                        .iter()
                        .map(|p| (p.xy() - start).norm())
                        .fold(0.0, f64::max),
                )
            })
            .fold(0.0, f64::max)
    }
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<GroundTruth, WorldError> {
    cfg.validate()?;
    let tracks = cfg
        .initial_truths()
        .into_iter()
        .map(|mut truth| {
            let mut track = Vec::with_capacity(cfg.duration);
            for k in 0..cfg.duration {
                track.push(truth.position);
                truth = step_castaway(&truth, &cfg.wave_sources, k, cfg.dt);
            }
            track
        })
        .collect();
    Ok(GroundTruth { dt: cfg.dt, tracks })
}

/// Ranges used to draw random scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGenerator {
    pub castaways: usize,
    pub sources: usize,
    pub duration: usize,
    pub dt: f64,
    /// Castaways start uniformly in a disk of this radius around the origin.
    pub cluster_radius: f64,
    /// Wave sources sit at this planar distance range from the origin.
    pub source_distance: (f64, f64),
    pub wavelength: (f64, f64),
    /// Drawn steepness q·H; must stay below [`MAX_STEEPNESS`].
    pub steepness: (f64, f64),
    pub decay_rate: (f64, f64),
    pub depth: f64,
    pub radar_sigma: f64,
    pub agent_altitude: f64,
}

impl Default for ScenarioGenerator {
    fn default() -> Self {
        ScenarioGenerator {
            castaways: 4,
            sources: 3,
            duration: 3600,
            dt: 1.0,
            cluster_radius: 35.0,
            source_distance: (150.0, 600.0),
            wavelength: (20.0, 60.0),
            steepness: (0.02, 0.08),
            decay_rate: (0.0, 0.002),
            depth: 50.0,
            radar_sigma: 25.0,
            agent_altitude: 30.0,
        }
    }
}

pub const DEFAULT_SCENARIO_SEED: u64 = 7;

impl ScenarioGenerator {
    pub fn generate(&self, seed: u64) -> ScenarioConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wave_sources = (0..self.sources)
            .map(|_| {
                let bearing = rng.random_range(0.0..2.0 * PI);
                let dist = rng.random_range(self.source_distance.0..=self.source_distance.1);
                let wavelength = rng.random_range(self.wavelength.0..=self.wavelength.1);
                let steepness = rng.random_range(self.steepness.0..=self.steepness.1);
                let height = steepness * wavelength / (2.0 * PI);
                let decay = rng.random_range(self.decay_rate.0..=self.decay_rate.1);
                WaveSource::new(
                    Vector2::new(dist * bearing.cos(), dist * bearing.sin()),
                    height,
                    wavelength,
                    decay,
                    self.depth,
                    STANDARD_GRAVITY,
                )
                .expect("generator ranges are inside the parameter domain")
            })
            .collect();
        let initial_positions = (0..self.castaways)
            .map(|_| {
                let r = self.cluster_radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..2.0 * PI);
                Vector3::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect();
        ScenarioConfig {
            seed,
            duration: self.duration,
            dt: self.dt,
            wave_sources,
            initial_positions,
            radar_sigma: self.radar_sigma,
            agent_init: AgentState::at_rest(Vector3::new(0.0, 0.0, self.agent_altitude)),
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioGenerator::default().generate(DEFAULT_SCENARIO_SEED)
    }
}
