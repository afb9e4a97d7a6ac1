use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::lattice::{axis_levels, snap_to_lattice};
use super::rollout::{rollout_cost, rollout_with, RolloutOptions};
use super::{candidate_order, Plan, PlannerConfig, PlannerError, TrackingModel};
use crate::agent::{clamp_control, AgentState, Control, ControlBounds};
use crate::estimator::Belief;

/// Relative floor on the sampling std so the search never collapses to a point.
const MIN_STD_FRACTION: f64 = 1e-3;

/// First sampling mean: the warm plan shifted one step left with its last
/// control repeated, or all zeros.
pub fn initial_mean(warm: Option<&Plan>, horizon: usize) -> Vec<Control> {
    match warm {
        Some(p) if !p.controls.is_empty() => {
            let last = *p.controls.last().unwrap();
            (0..horizon)
                .map(|t| p.controls.get(t + 1).copied().unwrap_or(last))
                .collect()
        }
        _ => vec![Control::zeros(); horizon],
    }
}

/// Clamps each control against its predecessor, starting from `prev`.
pub(crate) fn clamp_chain(raw: &[Control], prev: &Control, bounds: &ControlBounds) -> Vec<Control> {
    let mut last = *prev;
    raw.iter()
        .map(|u| {
            last = clamp_control(u, &last, bounds);
            last
        })
        .collect()
}

pub(crate) fn chain_admissible(
    controls: &[Control],
    prev: &Control,
    bounds: &ControlBounds,
) -> bool {
    let mut last = prev;
    controls.iter().all(|u| {
        let ok = bounds.admits(u, last);
        last = u;
        ok
    })
}

/// The zero-control plan made admissible with respect to `prev`.
pub fn zero_plan_controls(prev: &Control, horizon: usize, bounds: &ControlBounds) -> Vec<Control> {
    clamp_chain(&vec![Control::zeros(); horizon], prev, bounds)
}

pub(crate) fn fallback_plan(
    agent: &AgentState,
    beliefs: &[Belief],
    model: &TrackingModel,
    opts: &RolloutOptions,
    prev: &Control,
    horizon: usize,
    evaluations: usize,
) -> Plan {
    let controls = zero_plan_controls(prev, horizon, &model.bounds);
    let r = rollout_with(&controls, agent, beliefs, model, opts);
    Plan {
        fallback: true,
        ..Plan::from_rollout(controls, r, evaluations)
    }
}

/// Cross-entropy search over length-`horizon` control sequences.
///
/// Each iteration samples from a per-step diagonal Gaussian, makes every
/// sample admissible by clamping it step by step from `prev`, scores the
/// samples with the rollout and refits the Gaussian to the elite set. The
/// zero plan and the initial mean are always scored, so the result is never
/// worse than either. Samples are drawn sequentially from one seeded stream
/// and scored in parallel; ranking uses a total order, so the thread count
/// never changes the answer.
pub fn plan(
    agent: &AgentState,
    beliefs: &[Belief],
    model: &TrackingModel,
    cfg: &PlannerConfig,
    prev: &Control,
    warm: Option<&Plan>,
) -> Result<Plan, PlannerError> {
    cfg.validate()?;
    if beliefs.is_empty() {
        return Err(PlannerError::NoTargets);
    }
    let n = cfg.horizon;
    let opt = &cfg.optimizer;
    let bounds = &model.bounds;
    let elite = opt.elite_count();
    let levels = cfg
        .snap_to_lattice
        .then(|| axis_levels(bounds, cfg.lattice_levels));
    let opts = RolloutOptions::for_planner(cfg);
    let score = |c: &[Control]| rollout_cost(c, agent, beliefs, model, &opts);
    // Snapped candidates that break the smoothing bound are kept but scored
    // infinite, so every finite score belongs to a lattice sequence.
    let admit = |raw: &[Control]| -> Vec<Control> {
        let c = clamp_chain(raw, prev, bounds);
        match &levels {
            Some(l) => snap_to_lattice(&c, l),
            None => c,
        }
    };
    let feasible = |c: &[Control]| levels.is_none() || chain_admissible(c, prev, bounds);

    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut mean = initial_mean(warm, n);
    let floor = bounds.u_max * MIN_STD_FRACTION;
    let mut std = vec![bounds.u_max * opt.initial_std_fraction; n];
    let mut best: Option<(f64, Vec<Control>)> = None;
    let mut evaluations = 0;

    for iter in 0..opt.iterations.max(1) {
        let mut candidates: Vec<Vec<Control>> = Vec::with_capacity(opt.population);
        if iter == 0 {
            candidates.push(admit(&vec![Control::zeros(); n]));
        }
        candidates.push(admit(&mean));
        while candidates.len() < opt.population {
            let raw: Vec<Control> = (0..n)
                .map(|t| {
                    Control::from_fn(|i, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[t][i] + std[t][i] * z
                    })
                })
                .collect();
            candidates.push(admit(&raw));
        }
        let costs: Vec<f64> = candidates
            .par_iter()
            .map(|c| if feasible(c) { score(c) } else { f64::INFINITY })
            .collect();
        evaluations += candidates.len();

        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| candidate_order(costs[a], &candidates[a], costs[b], &candidates[b]));
        let top = order[0];
        if best
            .as_ref()
            .is_none_or(|(c, u)| candidate_order(costs[top], &candidates[top], *c, u).is_lt())
        {
            best = Some((costs[top], candidates[top].clone()));
        }

        let elites: Vec<&Vec<Control>> = order
            .iter()
            .take(elite)
            .filter(|&&k| costs[k].is_finite())
            .map(|&k| &candidates[k])
            .collect();
        if elites.is_empty() {
            continue;
        }
        let m = elites.len() as f64;
        for t in 0..n {
            let mu: Control = elites.iter().map(|e| e[t]).sum::<Control>() / m;
            let var: Control = elites
                .iter()
                .map(|e| (e[t] - mu).component_mul(&(e[t] - mu)))
                .sum::<Control>()
                / m;
            mean[t] = mu;
            std[t] = var.map(f64::sqrt).sup(&floor);
        }
    }

    let (cost, controls) = best.expect("at least one candidate is scored");
    if !cost.is_finite() {
        return Ok(fallback_plan(
            agent,
            beliefs,
            model,
            &opts,
            prev,
            n,
            evaluations,
        ));
    }
    let r = rollout_with(&controls, agent, beliefs, model, &opts);
    debug_assert_eq!(r.cost, cost);
    Ok(Plan::from_rollout(controls, r, evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{DynamicsParams, Limits};
    use crate::estimator::{kf_init, FilterParams};
    use crate::planner::{exhaustive_lattice, Inclusion};
    use crate::sensor::SensorConfig;
    use nalgebra::{Vector2, Vector3};

    fn model_with(smoothing_fraction: f64) -> TrackingModel {
        let limits = Limits {
            smoothing_fraction,
            ..Limits::default()
        };
        TrackingModel::new(
            DynamicsParams::new(1.0, 0.95, 1.5).unwrap(),
            limits,
            SensorConfig::default(),
            FilterParams::white_acceleration(1.0, 0.05, 1.0).unwrap(),
        )
    }

    fn cfg(horizon: usize, inclusion: Inclusion, seed: u64) -> PlannerConfig {
        let mut c = PlannerConfig {
            horizon,
            inclusion,
            ..PlannerConfig::default()
        };
        c.optimizer.seed = seed;
        c
    }

    fn beliefs_at(points: &[(f64, f64)], sigma: f64, m: &TrackingModel) -> Vec<Belief> {
        points
            .iter()
            .map(|&(x, y)| kf_init(Vector2::new(x, y), sigma, &m.filter).unwrap())
            .collect()
    }

    #[test]
    fn initial_mean_shifts_the_warm_plan() {
        let warm = Plan {
            controls: vec![
                Control::new(1.0, 0.0, 0.0),
                Control::new(2.0, 0.0, 0.0),
                Control::new(3.0, 0.0, 0.0),
            ],
            cost: 0.0,
            predicted_traces: Vec::new(),
            binaries: Vec::new(),
            fallback: false,
            evaluations: 0,
        };
        assert_eq!(
            initial_mean(Some(&warm), 3),
            vec![
                Control::new(2.0, 0.0, 0.0),
                Control::new(3.0, 0.0, 0.0),
                Control::new(3.0, 0.0, 0.0)
            ]
        );
        assert_eq!(initial_mean(None, 2), vec![Control::zeros(); 2]);
    }

    #[test]
    fn zero_plan_is_clamped_towards_zero() {
        let bounds = model_with(0.5).bounds;
        let z = zero_plan_controls(&Control::new(3.0, -3.0, 0.0), 3, &bounds);
        assert_eq!(z[0], Control::new(1.5, -1.5, 0.0));
        assert_eq!(z[1], Control::zeros());
        assert!(chain_admissible(&z, &Control::new(3.0, -3.0, 0.0), &bounds));
    }

    #[test]
    fn never_worse_than_the_zero_plan() {
        let m = model_with(0.5);
        for seed in 0..6 {
            let agent = AgentState::at_rest(Vector3::new(
                seed as f64 * 7.0 - 20.0,
                5.0,
                15.0 + 10.0 * seed as f64,
            ));
            let beliefs = beliefs_at(&[(0.0, 0.0), (25.0, -10.0), (-15.0, 20.0)], 8.0, &m);
            let prev = Control::new(1.0, -0.5, 0.2);
            for inclusion in [Inclusion::Mean, Inclusion::Expected] {
                let c = cfg(5, inclusion, seed);
                let p = plan(&agent, &beliefs, &m, &c, &prev, None).unwrap();
                let zero = zero_plan_controls(&prev, 5, &m.bounds);
                let zero_cost = rollout_with(
                    &zero,
                    &agent,
                    &beliefs,
                    &m,
                    &RolloutOptions::for_planner(&c),
                )
                .cost;
                assert!(p.cost <= zero_cost, "{} > {}", p.cost, zero_cost);
                assert!(chain_admissible(&p.controls, &prev, &m.bounds));
                assert_eq!(
                    p.evaluations,
                    c.optimizer.population * c.optimizer.iterations
                );
            }
        }
    }

    #[test]
    fn same_seed_same_plan_for_any_thread_count() {
        let m = model_with(0.5);
        let agent = AgentState::at_rest(Vector3::new(0.0, 0.0, 30.0));
        let beliefs = beliefs_at(&[(10.0, 5.0), (-20.0, 0.0)], 8.0, &m);
        let c = cfg(5, Inclusion::Expected, 42);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| plan(&agent, &beliefs, &m, &c, &Control::zeros(), None).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(1));
    }

    #[test]
    fn all_zero_costs_pick_the_zero_plan() {
        // Certain beliefs and no process noise: every candidate costs 0 and
        // the tie-break on squared control selects the zero plan.
        let filter = FilterParams::white_acceleration(1.0, 0.0, 0.0).unwrap();
        let m = TrackingModel {
            filter,
            ..model_with(0.5)
        };
        let b = Belief {
            mean: nalgebra::Vector4::new(5.0, 5.0, 0.0, 0.0),
            cov: nalgebra::Matrix4::zeros(),
        };
        let agent = AgentState::at_rest(Vector3::new(0.0, 0.0, 30.0));
        let p = plan(
            &agent,
            &[b],
            &m,
            &cfg(4, Inclusion::Expected, 3),
            &Control::zeros(),
            None,
        )
        .unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.controls, vec![Control::zeros(); 4]);
    }

    #[test]
    fn close_to_the_lattice_optimum() {
        let m = model_with(2.0);
        let instances = [
            (Vector3::new(0.0, 0.0, 20.0), vec![(6.0, 2.0)]),
            (Vector3::new(5.0, -5.0, 35.0), vec![(-10.0, 8.0)]),
            (
                Vector3::new(0.0, 0.0, 40.0),
                vec![(-30.0, 0.0), (30.0, 0.0)],
            ),
        ];
        for (k, (pos, targets)) in instances.into_iter().enumerate() {
            let agent = AgentState::at_rest(pos);
            let beliefs = beliefs_at(&targets, 5.0, &m);
            let c = cfg(3, Inclusion::Expected, k as u64);
            let lattice = exhaustive_lattice(&agent, &beliefs, &m, &c, &Control::zeros()).unwrap();
            let cem = plan(&agent, &beliefs, &m, &c, &Control::zeros(), None).unwrap();
            assert!(
                cem.cost <= 1.05 * lattice.cost,
                "instance {k}: {} vs {}",
                cem.cost,
                lattice.cost
            );
        }
    }

    #[test]
    fn snapped_search_never_beats_the_lattice() {
        let m = model_with(2.0);
        let agent = AgentState::at_rest(Vector3::new(0.0, 0.0, 25.0));
        let beliefs = beliefs_at(&[(8.0, -3.0), (-12.0, 6.0)], 6.0, &m);
        for seed in 0..4 {
            let c = PlannerConfig {
                snap_to_lattice: true,
                ..cfg(2, Inclusion::Expected, seed)
            };
            let lattice = exhaustive_lattice(&agent, &beliefs, &m, &c, &Control::zeros()).unwrap();
            let snapped = plan(&agent, &beliefs, &m, &c, &Control::zeros(), None).unwrap();
            assert!(snapped.cost >= lattice.cost);
            let levels = [-3.0, 0.0, 3.0];
            assert!(snapped
                .controls
                .iter()
                .flat_map(|u| u.iter())
                .all(|x| levels.contains(x)));
        }
    }

    #[test]
    fn climbs_for_two_separated_targets_and_descends_for_one() {
        let m = model_with(2.0);
        let agent = AgentState::at_rest(Vector3::new(0.0, 0.0, 40.0));
        for inclusion in [Inclusion::Mean, Inclusion::Expected] {
            let c = cfg(3, inclusion, 0);
            let one = exhaustive_lattice(
                &agent,
                &beliefs_at(&[(0.0, 0.0)], 3.0, &m),
                &m,
                &c,
                &Control::zeros(),
            )
            .unwrap();
            assert!(one.controls[0].z < 0.0, "{inclusion:?}");
            let two = beliefs_at(&[(-30.0, 0.0), (30.0, 0.0)], 3.0, &m);
            let two = exhaustive_lattice(&agent, &two, &m, &c, &Control::zeros()).unwrap();
            assert!(two.controls[0].z > 0.0, "{inclusion:?}");
        }
    }

    #[test]
    fn infeasible_start_falls_back() {
        let m = model_with(0.5);
        let agent = AgentState {
            position: Vector3::new(0.0, 0.0, 5.5),
            velocity: Vector3::new(0.0, 0.0, -3.0),
        };
        let beliefs = beliefs_at(&[(0.0, 0.0)], 5.0, &m);
        let p = plan(
            &agent,
            &beliefs,
            &m,
            &cfg(3, Inclusion::Mean, 1),
            &Control::zeros(),
            None,
        )
        .unwrap();
        assert!(p.fallback);
        assert_eq!(p.controls, vec![Control::zeros(); 3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model_with(0.5);
        let agent = AgentState::at_rest(Vector3::new(0.0, 0.0, 30.0));
        assert_eq!(
            plan(
                &agent,
                &[],
                &m,
                &PlannerConfig::default(),
                &Control::zeros(),
                None
            ),
            Err(PlannerError::NoTargets)
        );
        let bad = PlannerConfig {
            horizon: 0,
            ..PlannerConfig::default()
        };
        let beliefs = beliefs_at(&[(0.0, 0.0)], 5.0, &m);
        assert!(matches!(
            plan(&agent, &beliefs, &m, &bad, &Control::zeros(), None),
            Err(PlannerError::Config(_))
        ));
    }
}
