use std::cmp::Ordering;

use rayon::prelude::*;

use super::optimizer::{chain_admissible, fallback_plan};
use super::rollout::{rollout_cost, rollout_with, RolloutOptions};
use super::{candidate_order, Plan, PlannerConfig, PlannerError, TrackingModel};
use crate::agent::{AgentState, Control, ControlBounds};
use crate::estimator::Belief;

/// Enumeration guard on the number of lattice sequences.
pub const MAX_LATTICE_SEQUENCES: f64 = 1e6;

/// `levels` evenly spaced values from `-u_max` to `u_max`; a single level is 0.
pub fn lattice_levels(u_max: f64, levels: usize) -> Vec<f64> {
    match levels {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let h = 2.0 * u_max / (levels - 1) as f64;
            (0..levels)
                .map(|k| {
                    if 2 * k + 1 == levels {
                        0.0
                    } else {
                        -u_max + h * k as f64
                    }
                })
                .collect()
        }
    }
}

/// Number of control sequences on the lattice, `levels^(3·horizon)`.
pub fn lattice_size(levels: usize, horizon: usize) -> f64 {
    (levels as f64).powi(3 * horizon as i32)
}

pub(crate) fn axis_levels(bounds: &ControlBounds, levels: usize) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|i| lattice_levels(bounds.u_max[i], levels))
}

/// Replaces every component with its nearest lattice level (lower on ties).
pub fn snap_to_lattice(controls: &[Control], levels: &[Vec<f64>; 3]) -> Vec<Control> {
    controls
        .iter()
        .map(|u| {
            Control::from_fn(|i, _| {
                let mut best = levels[i][0];
                for &l in &levels[i][1..] {
                    if (u[i] - l).abs() < (u[i] - best).abs() {
                        best = l;
                    }
                }
                best
            })
        })
        .collect()
}

fn decode(mut index: u64, levels: &[Vec<f64>; 3], horizon: usize) -> Vec<Control> {
    let base = levels[0].len() as u64;
    let mut digits = vec![0usize; 3 * horizon];
    for d in digits.iter_mut().rev() {
        *d = (index % base) as usize;
        index /= base;
    }
    (0..horizon)
        .map(|t| Control::from_fn(|i, _| levels[i][digits[3 * t + i]]))
        .collect()
}

/// Exact minimiser over every sequence whose components lie on the
/// per-axis lattice and which respects the smoothing bound from `prev`.
/// Ties go to the smaller total squared control, then lexicographic order.
pub fn exhaustive_lattice(
    agent: &AgentState,
    beliefs: &[Belief],
    model: &TrackingModel,
    cfg: &PlannerConfig,
    prev: &Control,
) -> Result<Plan, PlannerError> {
    cfg.validate()?;
    if beliefs.is_empty() {
        return Err(PlannerError::NoTargets);
    }
    let n = cfg.horizon;
    let size = lattice_size(cfg.lattice_levels, n);
    if size > MAX_LATTICE_SEQUENCES {
        return Err(PlannerError::LatticeTooLarge {
            size,
            limit: MAX_LATTICE_SEQUENCES,
        });
    }
    let levels = axis_levels(&model.bounds, cfg.lattice_levels);
    let count = size as u64;
    let opts = RolloutOptions::for_planner(cfg);

    let better = |a: (f64, u64), b: (f64, u64)| -> (f64, u64) {
        let ord = match a.0.total_cmp(&b.0) {
            Ordering::Equal => {
                candidate_order(a.0, &decode(a.1, &levels, n), b.0, &decode(b.1, &levels, n))
            }
            o => o,
        };
        if ord.is_le() {
            a
        } else {
            b
        }
    };
    let best = (0..count)
        .into_par_iter()
        .filter_map(|k| {
            let c = decode(k, &levels, n);
            chain_admissible(&c, prev, &model.bounds)
                .then(|| (rollout_cost(&c, agent, beliefs, model, &opts), k))
        })
        .reduce_with(better);

    match best {
        Some((cost, k)) if cost.is_finite() => {
            let controls = decode(k, &levels, n);
            let r = rollout_with(&controls, agent, beliefs, model, &opts);
            Ok(Plan::from_rollout(controls, r, count as usize))
        }
        _ => Ok(fallback_plan(
            agent,
            beliefs,
            model,
            &opts,
            prev,
            n,
            count as usize,
        )),
    }
}
