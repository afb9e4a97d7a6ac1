use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, stream, EpisodeSummary, Policy};
use crate::agent::{AgentState, Limits};
use crate::config::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub policies: Vec<Policy>,
    /// Agent start is uniform in a disk of this radius around the castaway
    /// centroid (m).
    pub init_radius: f64,
    pub init_altitude: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            runs: 20,
            policies: vec![
                Policy::Mpc,
                Policy::Hover {
                    altitude: Policy::DEFAULT_HOVER_ALTITUDE,
                },
                Policy::lawnmower(),
            ],
            init_radius: 100.0,
            init_altitude: 30.0,
        }
    }
}

impl MonteCarloConfig {
    /// Errors are `(field, message)`.
    pub fn validate(&self, limits: &Limits) -> Result<(), (String, String)> {
        if self.runs == 0 {
            return Err(("runs".into(), "must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(("policies".into(), "must list at least one policy".into()));
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.validate(limits)
                .map_err(|m| (format!("policies[{i}]"), m))?;
        }
        if !(self.init_radius >= 0.0 && self.init_radius.is_finite()) {
            return Err(("init_radius".into(), "must be non-negative".into()));
        }
        let ws = &limits.workspace;
        if !(self.init_altitude >= ws.min.z && self.init_altitude <= ws.max.z) {
            return Err(("init_altitude".into(), "is outside the workspace".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

impl MetricStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MetricStats { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRow {
    pub policy: String,
    pub runs: usize,
    pub mean_summed_trace: MetricStats,
    pub final_summed_trace: MetricStats,
    pub max_target_trace: MetricStats,
    pub total_detections: MetricStats,
    pub mean_plan_ms: MetricStats,
    pub fallbacks: MetricStats,
    /// Per-run summaries in run order.
    pub per_run: Vec<EpisodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloTable {
    pub base_seed: u64,
    pub runs: usize,
    /// `(episode seed, agent start)` of each run, shared by all policies.
    pub starts: Vec<(u64, AgentState)>,
    pub rows: Vec<MonteCarloRow>,
}

/// Episode seed and agent start of run `r`, from its own stream of
/// `base_seed`.
pub(crate) fn run_start(
    cfg: &Config,
    mc: &MonteCarloConfig,
    base_seed: u64,
    r: usize,
) -> (u64, AgentState) {
    let mut rng = stream(base_seed, r as u64);
    let seed = rng.next_u64();
    let radius = mc.init_radius * rng.random::<f64>().sqrt();
    let angle = rng.random_range(0.0..2.0 * PI);
    let c = cfg.scenario.centroid() + Vector2::new(radius * angle.cos(), radius * angle.sin());
    (
        seed,
        AgentState::at_rest(Vector3::new(c.x, c.y, mc.init_altitude)),
    )
}

/// Runs `n_runs` episodes per policy. Run `r` uses the same episode seed and
/// agent start for every policy. Episodes run in parallel; results are
/// gathered in (policy, run) order.
pub fn monte_carlo(
    cfg: &Config,
    policies: &[Policy],
    n_runs: usize,
    base_seed: u64,
) -> crate::Result<MonteCarloTable> {
    if n_runs == 0 {
        return Err(crate::Error::Precondition(
            "n_runs must be at least 1".into(),
        ));
    }
    let mc = MonteCarloConfig {
        runs: n_runs,
        policies: policies.to_vec(),
        ..cfg.monte_carlo.clone()
    };
    mc.validate(&cfg.limits)
        .map_err(|(f, m)| crate::Error::Precondition(format!("monte_carlo.{f}: {m}")))?;
    let starts: Vec<(u64, AgentState)> = (0..n_runs)
        .map(|r| run_start(cfg, &mc, base_seed, r))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|p| (0..n_runs).map(move |r| (p, r)))
        .collect();
    let summaries = jobs
        .par_iter()
        .map(|&(p, r)| {
            let (seed, start) = starts[r];
            let mut run_cfg = cfg.clone();
            run_cfg.scenario.agent_init = start;
            run_episode(&run_cfg, &policies[p], seed).map(|log| log.summary)
        })
        .collect::<crate::Result<Vec<_>>>()?;

    let rows = policies
        .iter()
        .zip(summaries.chunks(n_runs))
        .map(|(policy, runs)| {
            let stat = |f: fn(&EpisodeSummary) -> f64| {
                MetricStats::of(&runs.iter().map(f).collect::<Vec<_>>())
            };
            MonteCarloRow {
                policy: policy.to_string(),
                runs: n_runs,
                mean_summed_trace: stat(|s| s.mean_summed_trace),
                final_summed_trace: stat(|s| s.final_summed_trace),
                max_target_trace: stat(|s| s.max_target_trace),
                total_detections: stat(|s| s.total_detections as f64),
                mean_plan_ms: stat(|s| s.mean_plan_ms),
                fallbacks: stat(|s| s.fallbacks as f64),
                per_run: runs.to_vec(),
            }
        })
        .collect();
    Ok(MonteCarloTable {
        base_seed,
        runs: n_runs,
        starts,
        rows,
    })
}
