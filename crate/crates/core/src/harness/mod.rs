//! Closed-loop episodes, baselines, Monte Carlo comparison and timing.
//!
//! Every random draw comes from a ChaCha stream derived from the episode
//! seed, one stream per purpose (radar, camera, planner), so swapping a
//! policy never shifts another component's draws.

mod monte_carlo;
mod policy;
mod timing;

pub use monte_carlo::{monte_carlo, MetricStats, MonteCarloConfig, MonteCarloRow, MonteCarloTable};
pub use policy::Policy;
pub use timing::{timing_sweep, TimingCell, TimingConfig, TimingTable};

use nalgebra::{Vector2, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{step_agent, AgentState, Control};
use crate::config::Config;
use crate::estimator::{kf_init, kf_predict, kf_update, Belief, Observation};
use crate::planner::MpcController;
use crate::sensor::{fov_rect, sense};
use crate::world::step_castaway;
use policy::WaypointFollower;

const RADAR_STREAM: u64 = 1;
const CAMERA_STREAM: u64 = 2;
const PLANNER_STREAM: u64 = 3;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub truth: Vector3<f64>,
    pub mean: Vector4<f64>,
    pub trace: f64,
    /// Inside the camera footprint this step.
    pub in_fov: bool,
    /// Inside the footprint and detected.
    pub detected: bool,
}

/// State after step `step`: the agent has moved, the castaways have
/// drifted and the filters have absorbed this step's detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// End of the step (s).
    pub time: f64,
    pub agent: AgentState,
    pub control: Control,
    pub targets: Vec<TargetRecord>,
    /// Wall time of the planning call (ms); zero for scripted policies.
    pub plan_ms: f64,
    /// The planner found no feasible candidate and fell back.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: usize,
    /// Time average of each target's trace.
    pub mean_trace_per_target: Vec<f64>,
    /// Time average of the summed trace.
    pub mean_summed_trace: f64,
    pub final_summed_trace: f64,
    pub max_target_trace: f64,
    pub total_detections: usize,
    pub mean_plan_ms: f64,
    pub max_plan_ms: f64,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub policy: Policy,
    /// Beliefs right after the radar fix, before the first step.
    pub initial_beliefs: Vec<Belief>,
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    /// `traces[k][i]` for every record.
    pub fn traces(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| r.targets.iter().map(|t| t.trace).collect())
            .collect()
    }
}

fn summarize(records: &[StepRecord], targets: usize) -> EpisodeSummary {
    if records.is_empty() {
        return EpisodeSummary {
            mean_trace_per_target: vec![0.0; targets],
            ..Default::default()
        };
    }
    let n = records.len() as f64;
    let mut per_target = vec![0.0; targets];
    let mut summed = 0.0;
    let mut max_trace: f64 = 0.0;
    let mut detections = 0;
    for r in records {
        for (i, t) in r.targets.iter().enumerate() {
            per_target[i] += t.trace;
            summed += t.trace;
            max_trace = max_trace.max(t.trace);
            detections += usize::from(t.detected);
        }
    }
    per_target.iter_mut().for_each(|v| *v /= n);
    let last = records.last().unwrap();
    EpisodeSummary {
        steps: records.len(),
        mean_trace_per_target: per_target,
        mean_summed_trace: summed / n,
        final_summed_trace: last.targets.iter().map(|t| t.trace).sum(),
        max_target_trace: max_trace,
        total_detections: detections,
        mean_plan_ms: records.iter().map(|r| r.plan_ms).sum::<f64>() / n,
        max_plan_ms: records.iter().map(|r| r.plan_ms).fold(0.0, f64::max),
        fallbacks: records.iter().filter(|r| r.fallback).count(),
    }
}

enum Controller {
    Mpc(Box<MpcController>),
    Scripted(WaypointFollower),
    Idle,
}

/// Bounding box of the belief means.
fn belief_box(beliefs: &[Belief]) -> (Vector2<f64>, Vector2<f64>) {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for b in beliefs {
        lo = lo.inf(&b.position());
        hi = hi.sup(&b.position());
    }
    (lo, hi)
}

/// Runs one closed-loop episode of `cfg.scenario.duration` steps.
///
/// Step `k`: castaways drift, the policy picks a control from the current
/// beliefs, the agent moves, every filter predicts, and the camera (from the
/// new agent pose) feeds detections into their filters. The radar fixes all
/// castaways once before step 0.
pub fn run_episode(cfg: &Config, policy: &Policy, seed: u64) -> crate::Result<EpisodeLog> {
    cfg.validate()?;
    policy
        .validate(&cfg.limits)
        .map_err(|m| crate::Error::Precondition(format!("policy {policy}: {m}")))?;
    let sc = &cfg.scenario;
    let model = cfg.model()?;

    let mut radar = stream(seed, RADAR_STREAM);
    let mut camera = stream(seed, CAMERA_STREAM);
    let planner_seed = rand::RngCore::next_u64(&mut stream(seed, PLANNER_STREAM));

    let mut truths = sc.initial_truths();
    let radar_noise = Normal::new(0.0, sc.radar_sigma).expect("radar_sigma validated");
    let mut beliefs = truths
        .iter()
        .map(|t| {
            let fix = t.position.xy()
                + Vector2::new(
                    radar_noise.sample(&mut radar),
                    radar_noise.sample(&mut radar),
                );
            kf_init(fix, sc.radar_sigma, &model.filter)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let initial_beliefs = beliefs.clone();

    let mut controller = match *policy {
        Policy::Mpc => Controller::Mpc(Box::new(MpcController::new(
            model,
            cfg.planner,
            planner_seed,
        )?)),
        Policy::Hover { altitude } => {
            let centroid =
                beliefs.iter().map(Belief::position).sum::<Vector2<f64>>() / beliefs.len() as f64;
            Controller::Scripted(WaypointFollower::hover(centroid, altitude, &model.limits))
        }
        Policy::Lawnmower {
            altitude,
            spacing,
            speed,
            margin,
        } => {
            let (lo, hi) = belief_box(&beliefs);
            let (_, half_v) = cfg.sensor.half_extent_per_metre();
            let spacing = spacing.unwrap_or(2.0 * half_v * altitude);
            let pad = Vector2::repeat(margin);
            Controller::Scripted(WaypointFollower::lawnmower(
                lo - pad,
                hi + pad,
                altitude,
                spacing,
                speed,
            ))
        }
        Policy::OpenLoop => Controller::Idle,
    };

    let mut agent = sc.agent_init;
    let mut prev = Control::zeros();
    let mut records = Vec::with_capacity(sc.duration);
    for k in 0..sc.duration {
        for t in truths.iter_mut() {
            *t = step_castaway(t, &sc.wave_sources, k, sc.dt);
        }

        let (u, plan_ms, fallback) = match &mut controller {
            Controller::Mpc(mpc) => {
                let s = mpc.step(&agent, &beliefs)?;
                (s.control, s.elapsed.as_secs_f64() * 1e3, s.plan.fallback)
            }
            Controller::Scripted(f) => (f.control(&agent, &prev, &model), 0.0, false),
            Controller::Idle => (Control::zeros(), 0.0, false),
        };
        agent = step_agent(&agent, &u, &model.dynamics, &model.limits.workspace)?;
        prev = u;

        let mut detected = vec![false; truths.len()];
        let mut in_fov = vec![false; truths.len()];
        beliefs
            .iter_mut()
            .for_each(|b| *b = kf_predict(b, &model.filter));
        if policy.uses_camera() {
            let rect = fov_rect(&agent, &cfg.sensor);
            for (i, t) in truths.iter().enumerate() {
                in_fov[i] = rect.contains(&t.position.xy());
            }
            for m in sense(&agent, &truths, &cfg.sensor, k, &mut camera) {
                let obs = Observation {
                    position: m.position,
                    sigma: m.sigma,
                };
                beliefs[m.target_id] = kf_update(&beliefs[m.target_id], Some(&obs), &model.filter)?;
                detected[m.target_id] = true;
            }
        }

        records.push(StepRecord {
            step: k,
            time: (k + 1) as f64 * sc.dt,
            agent,
            control: u,
            targets: truths
                .iter()
                .zip(&beliefs)
                .enumerate()
                .map(|(i, (t, b))| TargetRecord {
                    truth: t.position,
                    mean: b.mean,
                    trace: b.trace(),
                    in_fov: in_fov[i],
                    detected: detected[i],
                })
                .collect(),
            plan_ms,
            fallback,
        });
    }

    let summary = summarize(&records, truths.len());
    Ok(EpisodeLog {
        seed,
        policy: *policy,
        initial_beliefs,
        records,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ScenarioGenerator;

    fn short_config(duration: usize) -> Config {
        let mut sc = ScenarioGenerator::default().generate(3);
        sc.duration = duration;
        Config::with_scenario(sc)
    }

    #[test]
    fn zero_duration_gives_empty_log() {
        let cfg = short_config(0);
        for p in [
            Policy::Mpc,
            Policy::Hover { altitude: 100.0 },
            Policy::OpenLoop,
        ] {
            let log = run_episode(&cfg, &p, 1).unwrap();
            assert!(log.records.is_empty());
            assert_eq!(log.summary.mean_summed_trace, 0.0);
            assert_eq!(log.summary.mean_trace_per_target, vec![0.0; 4]);
        }
    }

    #[test]
    fn same_seed_same_log() {
        let cfg = short_config(40);
        for p in [Policy::Mpc, Policy::lawnmower()] {
            let mut a = run_episode(&cfg, &p, 11).unwrap();
            let mut b = run_episode(&cfg, &p, 11).unwrap();
            for log in [&mut a, &mut b] {
                log.records.iter_mut().for_each(|r| r.plan_ms = 0.0);
                log.summary.mean_plan_ms = 0.0;
                log.summary.max_plan_ms = 0.0;
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn open_loop_traces_are_repeated_predictions() {
        let cfg = short_config(50);
        let log = run_episode(&cfg, &Policy::OpenLoop, 5).unwrap();
        let filter = cfg.filter_params().unwrap();
        let mut beliefs = log.initial_beliefs.clone();
        for r in &log.records {
            beliefs.iter_mut().for_each(|b| *b = kf_predict(b, &filter));
            for (t, b) in r.targets.iter().zip(&beliefs) {
                assert_eq!(t.trace, b.trace());
                assert!(!t.detected);
            }
        }
        assert_eq!(log.summary.total_detections, 0);
    }

    #[test]
    fn records_match_duration_and_agent_stays_in_workspace() {
        let cfg = short_config(30);
        let log = run_episode(&cfg, &Policy::Mpc, 2).unwrap();
        assert_eq!(log.records.len(), 30);
        let mut prev = Control::zeros();
        let bounds = cfg.model().unwrap().bounds;
        for r in &log.records {
            assert!(cfg.limits.workspace.contains(&r.agent.position));
            assert!(bounds.admits(&r.control, &prev));
            assert!(r.targets.iter().all(|t| t.trace >= 0.0));
            prev = r.control;
        }
    }

    #[test]
    fn bad_policy_rejected() {
        let cfg = short_config(5);
        assert!(run_episode(&cfg, &Policy::Hover { altitude: 1000.0 }, 0).is_err());
    }
}
