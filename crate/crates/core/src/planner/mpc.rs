use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{plan, Plan, PlannerConfig, PlannerError, TrackingModel};
use crate::agent::{AgentState, Control};
use crate::estimator::Belief;

/// One receding-horizon decision.
#[derive(Debug, Clone)]
pub struct MpcStep {
    pub control: Control,
    pub plan: Plan,
    pub elapsed: Duration,
}

/// Re-plans every step, applies the first control and keeps the plan as the
/// next warm start. Each call gets a fresh optimizer seed from its own stream.
#[derive(Debug, Clone)]
pub struct MpcController {
    model: TrackingModel,
    cfg: PlannerConfig,
    prev: Control,
    warm: Option<Plan>,
    rng: ChaCha8Rng,
}

impl MpcController {
    pub fn new(model: TrackingModel, cfg: PlannerConfig, seed: u64) -> Result<Self, PlannerError> {
        cfg.validate()?;
        Ok(MpcController {
            model,
            cfg,
            prev: Control::zeros(),
            warm: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn previous_control(&self) -> Control {
        self.prev
    }

    pub fn warm_start(&self) -> Option<&Plan> {
        self.warm.as_ref()
    }

    pub fn step(
        &mut self,
        agent: &AgentState,
        beliefs: &[Belief],
    ) -> Result<MpcStep, PlannerError> {
        let mut cfg = self.cfg;
        cfg.optimizer.seed = self.rng.next_u64();
        let start = Instant::now();
        let p = plan(
            agent,
            beliefs,
            &self.model,
            &cfg,
            &self.prev,
            self.warm.as_ref(),
        )?;
        let elapsed = start.elapsed();
        let control = p.first_control();
        self.prev = control;
        self.warm = Some(p.clone());
        Ok(MpcStep {
            control,
            plan: p,
            elapsed,
        })
    }
}
