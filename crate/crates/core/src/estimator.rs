//! Constant-velocity Kalman filter with intermittent observations.
//!
//! One filter per castaway over `[x, y, vx, vy]`. A step without a
//! detection is a pure prediction; the covariance recursion never looks at
//! measurement values, which is what lets the planner evaluate it exactly.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid filter input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl Belief {
    pub fn position(&self) -> Vector2<f64> {
        self.mean.fixed_rows::<2>(0).into_owned()
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }
}

/// Tunables that are not fixed by the model structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    /// Spectral density of the white-acceleration process noise (m²/s³).
    pub accel_psd: f64,
    /// Initial velocity variance per axis ((m/s)²); the radar fixes position only.
    pub v0_var: f64,
}

// Wave-driven castaways oscillate about an almost fixed point (net drift of
// a few mm/s), so the default model is close to stationary. A looser model
// lets velocity estimates wander and carries unobserved means away from
// their targets.
impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            accel_psd: 1e-6,
            v0_var: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub dt: f64,
    pub transition: Matrix4<f64>,
    pub observation: Matrix2x4<f64>,
    pub process_noise: Matrix4<f64>,
    pub v0_var: f64,
}

impl FilterParams {
    pub fn new(dt: f64, process_noise: Matrix4<f64>, v0_var: f64) -> Result<Self, EstimatorError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EstimatorError::Invalid(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !(v0_var >= 0.0 && v0_var.is_finite()) {
            return Err(EstimatorError::Invalid(format!(
                "v0_var must be non-negative, got {v0_var}"
            )));
        }
        if (process_noise - process_noise.transpose()).amax() > 1e-12
            || process_noise.symmetric_eigenvalues().min() < -1e-12
        {
            return Err(EstimatorError::Invalid(
                "process noise must be symmetric PSD".into(),
            ));
        }
        let mut transition = Matrix4::identity();
        transition[(0, 2)] = dt;
        transition[(1, 3)] = dt;
        let observation = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        Ok(FilterParams {
            dt,
            transition,
            observation,
            process_noise,
            v0_var,
        })
    }

    /// Discretised white-acceleration noise with spectral density `psd`.
    pub fn white_acceleration(dt: f64, psd: f64, v0_var: f64) -> Result<Self, EstimatorError> {
        if !(psd >= 0.0 && psd.is_finite()) {
            return Err(EstimatorError::Invalid(format!(
                "accel_psd must be non-negative, got {psd}"
            )));
        }
        let (pp, pv, vv) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
        #[rustfmt::skip]
        let q = Matrix4::new(
            pp, 0.0, pv, 0.0,
            0.0, pp, 0.0, pv,
            pv, 0.0, vv, 0.0,
            0.0, pv, 0.0, vv,
        ) * psd;
        Self::new(dt, q, v0_var)
    }

    pub fn from_settings(dt: f64, settings: &FilterSettings) -> Result<Self, EstimatorError> {
        Self::white_acceleration(dt, settings.accel_psd, settings.v0_var)
    }
}

/// A position fix and the std it was taken with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Vector2<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanGain(pub Matrix4x2<f64>);

pub fn kf_init(
    radar_meas: Vector2<f64>,
    radar_sigma: f64,
    params: &FilterParams,
) -> Result<Belief, EstimatorError> {
    if !(radar_sigma > 0.0 && radar_sigma.is_finite()) {
        return Err(EstimatorError::Invalid(format!(
            "radar_sigma must be positive, got {radar_sigma}"
        )));
    }
    let var = radar_sigma * radar_sigma;
    Ok(Belief {
        mean: Vector4::new(radar_meas.x, radar_meas.y, 0.0, 0.0),
        cov: Matrix4::from_diagonal(&Vector4::new(var, var, params.v0_var, params.v0_var)),
    })
}

pub fn kf_predict(b: &Belief, params: &FilterParams) -> Belief {
    let a = &params.transition;
    Belief {
        mean: a * b.mean,
        cov: symmetrize(a * b.cov * a.transpose() + params.process_noise),
    }
}

pub fn kalman_gain(
    cov: &Matrix4<f64>,
    sigma: f64,
    params: &FilterParams,
) -> Result<KalmanGain, EstimatorError> {
    let c = &params.observation;
    let pct = cov * c.transpose();
    let innovation = c * pct + Matrix2::identity() * (sigma * sigma);
    let inv = innovation
        .try_inverse()
        .ok_or(EstimatorError::SingularInnovation)?;
    let gain = pct * inv;
    if gain.iter().all(|g| g.is_finite()) {
        Ok(KalmanGain(gain))
    } else {
        Err(EstimatorError::SingularInnovation)
    }
}

/// Correction step. `None` means no detection this step and returns the
/// prediction unchanged.
pub fn kf_update(
    pred: &Belief,
    observation: Option<&Observation>,
    params: &FilterParams,
) -> Result<Belief, EstimatorError> {
    let Some(obs) = observation else {
        return Ok(*pred);
    };
    let c = &params.observation;
    let KalmanGain(k) = kalman_gain(&pred.cov, obs.sigma, params)?;
    let innovation = obs.position - c * pred.mean;
    Ok(Belief {
        mean: pred.mean + k * innovation,
        cov: symmetrize(pred.cov - k * c * pred.cov),
    })
}

/// Σ trace(P_i).
pub fn trace_objective(beliefs: &[Belief]) -> f64 {
    beliefs.iter().map(Belief::trace).sum()
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
