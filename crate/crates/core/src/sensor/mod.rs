//! Downward camera: footprint, detection probability and noisy returns.

mod fit;

pub use fit::{fit_detection_model, read_detection_table, DetectionSample, FitError};

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentState;
use crate::world::CastawayTruth;

/// Continuity tolerance at the upper plateau.
pub const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid detection model: {0}")]
    Detection(String),
    #[error("invalid sensor configuration: {0}")]
    Config(String),
}

/// Piecewise-linear altitude → detection probability.
///
/// One below `alpha1`, `p_min` above `alpha2`, `beta1·z + beta2` between,
/// clamped to `[p_min, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub p_min: f64,
}

impl Default for DetectionModel {
    /// Fitted from recall of buoy detectors flown at 10–100 m.
    fn default() -> Self {
        DetectionModel {
            alpha1: 10.0,
            alpha2: 100.0,
            beta1: -0.0083,
            beta2: 1.083,
            p_min: 0.25,
        }
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<(), SensorError> {
        let all_finite = [self.alpha1, self.alpha2, self.beta1, self.beta2, self.p_min]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SensorError::Detection("parameters must be finite".into()));
        }
        if !(self.alpha1 < self.alpha2) {
            return Err(SensorError::Detection(format!(
                "alpha1 ({}) must be below alpha2 ({})",
                self.alpha1, self.alpha2
            )));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(SensorError::Detection(format!(
                "p_min must lie in (0, 1], got {}",
                self.p_min
            )));
        }
        let gap = (self.linear(self.alpha1) - 1.0).abs();
        if gap > CONTINUITY_TOL {
            return Err(SensorError::Detection(format!(
                "beta1*alpha1 + beta2 must equal 1 (off by {gap:e})"
            )));
        }
        Ok(())
    }

    /// The unclamped middle branch.
    pub fn linear(&self, z: f64) -> f64 {
        self.beta1 * z + self.beta2
    }

    pub fn prob(&self, z: f64) -> f64 {
        let p = if z <= self.alpha1 {
            1.0
        } else if z >= self.alpha2 {
            self.p_min
        } else {
            self.linear(z)
        };
        p.clamp(self.p_min, 1.0)
    }

    /// Size of the step the model makes at `alpha2`.
    pub fn upper_jump(&self) -> f64 {
        (self.linear(self.alpha2) - self.p_min).abs()
    }
}

pub fn detection_prob(z: f64, model: &DetectionModel) -> f64 {
    model.prob(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Full horizontal field of view (deg).
    pub theta_h: f64,
    /// Full vertical field of view (deg).
    pub theta_v: f64,
    /// Noise scale (m): the measurement std at full detection probability.
    pub gamma: f64,
    pub detection: DetectionModel,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            theta_h: 69.0,
            theta_v: 54.0,
            gamma: 2.0,
            detection: DetectionModel::default(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        for (name, theta) in [("theta_h", self.theta_h), ("theta_v", self.theta_v)] {
            if !(theta > 0.0 && theta < 180.0) {
                return Err(SensorError::Config(format!(
                    "{name} must lie in (0, 180) deg, got {theta}"
                )));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(SensorError::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        self.detection.validate()
    }

    /// Half-footprint per metre of altitude, (horizontal, vertical).
    pub fn half_extent_per_metre(&self) -> (f64, f64) {
        (
            (self.theta_h.to_radians() / 2.0).tan(),
            (self.theta_v.to_radians() / 2.0).tan(),
        )
    }
}

/// Axis-aligned camera footprint on the sea surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovRect {
    pub center: Vector2<f64>,
    pub half_len_h: f64,
    pub half_len_v: f64,
}

impl FovRect {
    /// Boundary inclusive.
    pub fn contains(&self, pos: &Vector2<f64>) -> bool {
        pos.x >= self.center.x - self.half_len_h
            && pos.x <= self.center.x + self.half_len_h
            && pos.y >= self.center.y - self.half_len_v
            && pos.y <= self.center.y + self.half_len_v
    }
}

pub fn fov_rect(agent: &AgentState, cfg: &SensorConfig) -> FovRect {
    let (kh, kv) = cfg.half_extent_per_metre();
    let z = agent.altitude().max(0.0);
    FovRect {
        center: agent.position.xy(),
        half_len_h: z * kh,
        half_len_v: z * kv,
    }
}

pub fn contains(rect: &FovRect, pos: &Vector2<f64>) -> bool {
    rect.contains(pos)
}

/// Measurement std at altitude `z`: `gamma / p(z)`.
pub fn measurement_sigma(z: f64, cfg: &SensorConfig) -> f64 {
    cfg.gamma / cfg.detection.prob(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub target_id: usize,
    pub position: Vector2<f64>,
    pub sigma: f64,
    pub step: usize,
}

/// Camera returns for one step.
///
/// Every in-footprint target is detected independently with `p(z)`;
/// detections carry isotropic Gaussian noise with `measurement_sigma(z)`.
/// Random draws are consumed in target order, only for in-footprint targets.
pub fn sense<R: Rng + ?Sized>(
    agent: &AgentState,
    truths: &[CastawayTruth],
    cfg: &SensorConfig,
    step: usize,
    rng: &mut R,
) -> Vec<Measurement> {
    let rect = fov_rect(agent, cfg);
    let z = agent.altitude();
    let p = cfg.detection.prob(z);
    let sigma = measurement_sigma(z, cfg);
    let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    truths
        .iter()
        .filter(|t| rect.contains(&t.position.xy()))
        .filter_map(|t| {
            if !rng.random_bool(p) {
                return None;
            }
            let offset = Vector2::new(noise.sample(rng), noise.sample(rng));
            Some(Measurement {
                target_id: t.id,
                position: t.position.xy() + offset,
                sigma,
                step,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent_at(x: f64, y: f64, z: f64) -> AgentState {
        AgentState::at_rest(Vector3::new(x, y, z))
    }

    #[test]
    fn default_model_values() {
        let m = DetectionModel::default();
        m.validate().unwrap();
        assert_eq!(m.prob(10.0), 1.0);
        assert_eq!(m.prob(100.0), 0.25);
        assert_abs_diff_eq!(m.prob(50.0), 0.668, epsilon = 1e-12);
        assert_eq!(m.prob(0.0), 1.0);
        assert_eq!(m.prob(400.0), 0.25);
        assert_abs_diff_eq!(m.upper_jump(), 0.003, epsilon = 1e-9);
    }

    #[test]
    fn invalid_models_rejected() {
        let m = DetectionModel {
            beta2: 1.1,
            ..DetectionModel::default()
        };
        assert!(m.validate().is_err());
        let m = DetectionModel {
            alpha2: 5.0,
            ..DetectionModel::default()
        };
        assert!(m.validate().is_err());
        let m = DetectionModel {
            p_min: 0.0,
            ..DetectionModel::default()
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn footprint_examples() {
        let cfg = SensorConfig::default();
        let r = fov_rect(&agent_at(1.0, 2.0, 0.0), &cfg);
        assert_eq!((r.half_len_h, r.half_len_v), (0.0, 0.0));
        assert!(r.contains(&Vector2::new(1.0, 2.0)));

        let square = SensorConfig {
            theta_h: 90.0,
            ..cfg
        };
        assert_abs_diff_eq!(
            fov_rect(&agent_at(0.0, 0.0, 10.0), &square).half_len_h,
            10.0,
            epsilon = 1e-12
        );

        let r = fov_rect(&agent_at(0.0, 0.0, 50.0), &cfg);
        assert_abs_diff_eq!(r.half_len_h, 34.3640479300806609, epsilon = 1e-10);
        assert_abs_diff_eq!(r.half_len_v, 25.4762724747214405, epsilon = 1e-10);
    }

    #[test]
    fn containment_is_boundary_inclusive() {
        let r = fov_rect(&agent_at(3.0, -4.0, 20.0), &SensorConfig::default());
        assert!(r.contains(&Vector2::new(3.0, -4.0)));
        assert!(r.contains(&Vector2::new(r.center.x + r.half_len_h, r.center.y)));
        assert!(r.contains(&Vector2::new(
            r.center.x - r.half_len_h,
            r.center.y + r.half_len_v
        )));
        assert!(!r.contains(&Vector2::new(
            (r.center.x + r.half_len_h).next_up(),
            r.center.y
        )));
    }

    #[test]
    fn sigma_examples() {
        let unit = SensorConfig {
            gamma: 1.0,
            ..SensorConfig::default()
        };
        assert_eq!(measurement_sigma(10.0, &unit), 1.0);
        assert_eq!(measurement_sigma(100.0, &unit), 4.0);
        let two = SensorConfig { gamma: 2.0, ..unit };
        assert_abs_diff_eq!(
            measurement_sigma(50.0, &two),
            2.99401197604790419,
            epsilon = 1e-12
        );
    }

    #[test]
    fn nothing_sensed_outside_footprint() {
        let cfg = SensorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truths = [
            CastawayTruth {
                id: 0,
                position: Vector3::new(500.0, 0.0, 0.0),
            },
            CastawayTruth {
                id: 1,
                position: Vector3::new(0.0, -300.0, 0.0),
            },
        ];
        for step in 0..100 {
            assert!(sense(&agent_at(0.0, 0.0, 100.0), &truths, &cfg, step, &mut rng).is_empty());
        }
    }

    #[test]
    fn low_altitude_always_detects() {
        let cfg = SensorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truths = [CastawayTruth {
            id: 7,
            position: Vector3::new(1.0, 1.0, 0.0),
        }];
        for step in 0..200 {
            let m = sense(&agent_at(0.0, 0.0, 8.0), &truths, &cfg, step, &mut rng);
            assert_eq!(m.len(), 1);
            assert_eq!(m[0].target_id, 7);
            assert_eq!(m[0].sigma, cfg.gamma);
            assert_eq!(m[0].step, step);
        }
    }

    #[test]
    fn detection_rate_at_hundred_metres() {
        let cfg = SensorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truths = [CastawayTruth {
            id: 0,
            position: Vector3::zeros(),
        }];
        let trials = 10_000;
        let hits: usize = (0..trials)
            .map(|k| sense(&agent_at(0.0, 0.0, 100.0), &truths, &cfg, k, &mut rng).len())
            .sum();
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.25).abs() <= 0.015, "rate {rate}");
    }

    proptest! {
        #[test]
        fn probability_is_monotone_and_bounded(z1 in 0.0..300.0f64, z2 in 0.0..300.0f64) {
            let m = DetectionModel::default();
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(m.prob(lo) >= m.prob(hi));
            prop_assert!((0.0..=1.0).contains(&m.prob(lo)));
        }

        #[test]
        fn sigma_times_probability_is_gamma(z in 0.0..300.0f64, gamma in 0.1..10.0f64) {
            let cfg = SensorConfig { gamma, ..SensorConfig::default() };
            let prod = measurement_sigma(z, &cfg) * cfg.detection.prob(z);
            prop_assert!((prod - gamma).abs() <= 1e-12 * gamma);
        }

        #[test]
        fn sigma_non_decreasing(z1 in 0.0..300.0f64, dz in 0.0..100.0f64) {
            let cfg = SensorConfig::default();
            prop_assert!(measurement_sigma(z1 + dz, &cfg) >= measurement_sigma(z1, &cfg));
        }

        #[test]
        fn footprint_grows_with_altitude(z in 0.0..150.0f64, dz in 1e-3..50.0f64) {
            let cfg = SensorConfig::default();
            let a = fov_rect(&agent_at(0.0, 0.0, z), &cfg);
            let b = fov_rect(&agent_at(0.0, 0.0, z + dz), &cfg);
            prop_assert!(b.half_len_h > a.half_len_h && b.half_len_v > a.half_len_v);
        }
    }
}
