use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Inclusion, PlannerConfig, TrackingModel};
use crate::agent::{propagate, AgentState, Control};
use crate::estimator::{kf_predict, kf_update, Belief, Observation};
use crate::sensor::{fov_rect, measurement_sigma, FovRect};

/// Observation weights below this are treated as no observation.
const MIN_WEIGHT: f64 = 1e-12;

/// Why a candidate was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Infeasibility {
    LeftWorkspace { step: usize },
    SpeedLimit { step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOptions {
    pub inclusion: Inclusion,
    /// `(step, target)` pairs whose update is dropped.
    pub suppressed: Vec<(usize, usize)>,
    /// Draw pseudo-measurement noise from this seed instead of using the
    /// noiseless predicted position.
    pub pseudo_noise_seed: Option<u64>,
}

/// The literal formulation: certain detection of in-footprint means.
impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            inclusion: Inclusion::Mean,
            suppressed: Vec::new(),
            pseudo_noise_seed: None,
        }
    }
}

impl RolloutOptions {
    /// Options matching a planner configuration. The pseudo-noise stream,
    /// when enabled, is keyed off the optimizer seed.
    pub fn for_planner(cfg: &PlannerConfig) -> Self {
        RolloutOptions {
            inclusion: cfg.inclusion,
            suppressed: Vec::new(),
            pseudo_noise_seed: cfg
                .pseudo_noise
                .then_some(cfg.optimizer.seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }
}

/// Probability that a target distributed as the belief's position marginal
/// lies in the footprint. Cross-covariance between x and y is ignored.
pub fn inclusion_probability(belief: &Belief, rect: &FovRect) -> f64 {
    let axis = |mu: f64, var: f64, c: f64, h: f64| -> f64 {
        if var <= 0.0 {
            return if mu >= c - h && mu <= c + h { 1.0 } else { 0.0 };
        }
        let s = var.sqrt() * std::f64::consts::SQRT_2;
        // Φ(b) − Φ(a) written with erfc to keep precision in both tails.
        let (a, b) = ((c - h - mu) / s, (c + h - mu) / s);
        if a >= 0.0 {
            0.5 * (libm::erfc(a) - libm::erfc(b))
        } else if b <= 0.0 {
            0.5 * (libm::erfc(-b) - libm::erfc(-a))
        } else {
            1.0 - 0.5 * (libm::erfc(-a) + libm::erfc(b))
        }
    };
    let m = &belief.mean;
    let p = &belief.cov;
    axis(m[0], p[(0, 0)], rect.center.x, rect.half_len_h)
        * axis(m[1], p[(1, 1)], rect.center.y, rect.half_len_v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub cost: f64,
    pub traces: Vec<Vec<f64>>,
    pub binaries: Vec<Vec<bool>>,
    pub infeasible: Option<Infeasibility>,
}

/// Rollout of the literal formulation ([`RolloutOptions::default`]).
pub fn rollout(
    controls: &[Control],
    agent0: &AgentState,
    beliefs0: &[Belief],
    model: &TrackingModel,
) -> Rollout {
    rollout_with(
        controls,
        agent0,
        beliefs0,
        model,
        &RolloutOptions::default(),
    )
}

/// For each step: move the agent, predict every belief, update the ones the
/// camera would observe from the new pose with a pseudo-measurement at the
/// predicted position, then add up the traces. Leaving the workspace or
/// exceeding a speed limit makes the cost infinite.
pub fn rollout_with(
    controls: &[Control],
    agent0: &AgentState,
    beliefs0: &[Belief],
    model: &TrackingModel,
    opts: &RolloutOptions,
) -> Rollout {
    let mut traces = Vec::with_capacity(controls.len());
    let mut binaries = Vec::with_capacity(controls.len());
    let (cost, infeasible) = simulate(controls, agent0, beliefs0, model, opts, |t, b| {
        traces.push(t.to_vec());
        binaries.push(b.to_vec());
    });
    Rollout {
        cost,
        traces,
        binaries,
        infeasible,
    }
}

/// Cost only; same arithmetic as [`rollout_with`].
pub(crate) fn rollout_cost(
    controls: &[Control],
    agent0: &AgentState,
    beliefs0: &[Belief],
    model: &TrackingModel,
    opts: &RolloutOptions,
) -> f64 {
    simulate(controls, agent0, beliefs0, model, opts, |_, _| {}).0
}

fn simulate(
    controls: &[Control],
    agent0: &AgentState,
    beliefs0: &[Belief],
    model: &TrackingModel,
    opts: &RolloutOptions,
    mut record: impl FnMut(&[f64], &[bool]),
) -> (f64, Option<Infeasibility>) {
    let mut agent = *agent0;
    let mut beliefs = beliefs0.to_vec();
    let mut traces = vec![0.0; beliefs.len()];
    let mut inside = vec![false; beliefs.len()];
    let mut noise_rng = opts.pseudo_noise_seed.map(ChaCha8Rng::seed_from_u64);
    let mut cost = 0.0;

    for (step, u) in controls.iter().enumerate() {
        agent = propagate(&agent, u, &model.dynamics);
        if !model.limits.workspace.contains(&agent.position) {
            return (f64::INFINITY, Some(Infeasibility::LeftWorkspace { step }));
        }
        if !model.limits.velocity_ok(&agent.velocity) {
            return (f64::INFINITY, Some(Infeasibility::SpeedLimit { step }));
        }
        let rect = fov_rect(&agent, &model.sensor);
        let z = agent.altitude();
        let sigma = measurement_sigma(z, &model.sensor);
        let p_detect = model.sensor.detection.prob(z);

        for (i, belief) in beliefs.iter_mut().enumerate() {
            let pred = kf_predict(belief, &model.filter);
            let mean_in = rect.contains(&pred.position());
            let weight = if opts.suppressed.contains(&(step, i)) {
                0.0
            } else {
                match opts.inclusion {
                    Inclusion::Mean => f64::from(u8::from(mean_in)),
                    Inclusion::Expected => p_detect * inclusion_probability(&pred, &rect),
                }
            };
            *belief = if weight > MIN_WEIGHT {
                let mut position = pred.position();
                if let Some(rng) = noise_rng.as_mut() {
                    let n: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
                    position += Vector2::from(n) * sigma;
                }
                let obs = Observation {
                    position,
                    sigma: sigma / weight.sqrt(),
                };
                kf_update(&pred, Some(&obs), &model.filter)
                    .expect("measurement std is bounded below by gamma > 0")
            } else {
                pred
            };
            inside[i] = mean_in && !opts.suppressed.contains(&(step, i));
            traces[i] = belief.trace();
        }
        cost += traces.iter().sum::<f64>();
        record(&traces, &inside);
    }
    (cost, None)
}
