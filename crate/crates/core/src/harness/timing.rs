use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, Control};
use crate::config::Config;
use crate::estimator::kf_init;
use crate::planner::{plan, PlannerConfig};

/// Upper bound on rollout target-steps in one planning call.
pub const MAX_TIMING_WORK: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub horizons: Vec<usize>,
    pub castaways: Vec<usize>,
    pub solves: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            horizons: vec![3, 5, 7],
            castaways: vec![2, 4],
            solves: 20,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.solves == 0 {
            return Err(("solves".into(), "must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(("horizons".into(), "must be non-empty and positive".into()));
        }
        if self.castaways.is_empty() || self.castaways.contains(&0) {
            return Err(("castaways".into(), "must be non-empty and positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub horizon: usize,
    pub castaways: usize,
    pub solves: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub cells: Vec<TimingCell>,
    /// Mean time never decreases with the horizon at fixed target count, or
    /// with the target count at fixed horizon.
    pub monotone: bool,
}

impl TimingTable {
    pub fn cell(&self, horizon: usize, castaways: usize) -> Option<&TimingCell> {
        self.cells
            .iter()
            .find(|c| c.horizon == horizon && c.castaways == castaways)
    }

    fn check_monotone(&self, horizons: &[usize], castaways: &[usize]) -> bool {
        let mean = |n, c| self.cell(n, c).map_or(f64::NAN, |x| x.mean_ms);
        let along_n = castaways
            .iter()
            .all(|&c| horizons.windows(2).all(|w| mean(w[0], c) <= mean(w[1], c)));
        let along_c = horizons
            .iter()
            .all(|&n| castaways.windows(2).all(|w| mean(n, w[0]) <= mean(n, w[1])));
        along_n && along_c
    }
}

/// Mean wall time of one planning call for every (horizon, target count).
///
/// Targets sit evenly on a 25 m ring around the agent, which hovers at 30 m,
/// each with the radar-fix belief. Each cell runs one untimed warm-up call
/// and then `n_solves` timed calls with different optimizer seeds.
pub fn timing_sweep(
    cfg: &Config,
    horizons: &[usize],
    castaways: &[usize],
    n_solves: usize,
) -> crate::Result<TimingTable> {
    let tc = TimingConfig {
        horizons: horizons.to_vec(),
        castaways: castaways.to_vec(),
        solves: n_solves,
    };
    tc.validate()
        .map_err(|(f, m)| crate::Error::Precondition(format!("timing.{f}: {m}")))?;
    let opt = &cfg.planner.optimizer;
    for &n in horizons {
        for &c in castaways {
            let work = (n * c) as f64 * opt.population as f64 * opt.iterations.max(1) as f64;
            if work > MAX_TIMING_WORK {
                return Err(crate::Error::Size(format!(
                    "N={n}, C={c} needs {work:e} rollout target-steps per call, limit {MAX_TIMING_WORK:e}"
                )));
            }
        }
    }
    let model = cfg.model()?;
    let mut hs = horizons.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let mut cs = castaways.to_vec();
    cs.sort_unstable();
    cs.dedup();

    let agent = AgentState::at_rest(Vector3::new(0.0, 0.0, 30.0));
    let mut cells = Vec::new();
    for &n in &hs {
        for &c in &cs {
            let beliefs = (0..c)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / c as f64;
                    kf_init(
                        Vector2::new(25.0 * a.cos(), 25.0 * a.sin()),
                        cfg.scenario.radar_sigma,
                        &model.filter,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut pc = PlannerConfig {
                horizon: n,
                ..cfg.planner
            };
            let mut times = Vec::with_capacity(n_solves);
            for s in 0..=n_solves {
                pc.optimizer.seed = s as u64;
                let start = Instant::now();
                plan(&agent, &beliefs, &model, &pc, &Control::zeros(), None)?;
                if s > 0 {
                    times.push(start.elapsed().as_secs_f64() * 1e3);
                }
            }
            cells.push(TimingCell {
                horizon: n,
                castaways: c,
                solves: n_solves,
                mean_ms: times.iter().sum::<f64>() / n_solves as f64,
                min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
                max_ms: times.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    let mut table = TimingTable {
        cells,
        monotone: false,
    };
    table.monotone = table.check_monotone(&hs, &cs);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let t = timing_sweep(&Config::default(), &[2], &[1], 2).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert!(t.cells[0].mean_ms > 0.0);
        assert!(t.monotone);
    }

    #[test]
    fn zero_solves_rejected() {
        assert!(matches!(
            timing_sweep(&Config::default(), &[3], &[2], 0),
            Err(crate::Error::Precondition(_))
        ));
    }

    #[test]
    fn oversized_grid_rejected() {
        assert!(matches!(
            timing_sweep(&Config::default(), &[100_000], &[4], 1),
            Err(crate::Error::Size(_))
        ));
    }
}
