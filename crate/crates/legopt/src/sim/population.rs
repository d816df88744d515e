//! Environment populations for the three domain-randomization modes.
//!
//! Spatial DR samples an independent morphology per env at spawn time;
//! temporal DR marches every env through a fixed 81-morphology schedule as
//! training progresses; no-DR keeps every env at the default morphology.
//! Classical randomization (friction, motor strength) happens per episode
//! inside `Env::reset` regardless of mode.

use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{Config, DrMode};
use crate::morphology::{
    build_robot, morphology_grid, sample_factors, FactorBounds, PdCorrectionPoly, RobotModel,
    ScalingFactors,
};
use crate::rng::{domain, stream};
use crate::sim::env::{Env, SimError};
use crate::sim::observation::Observation;
use crate::sim::reward::RewardBreakdown;
use crate::sim::terrain::TaskSpec;

/// Temporal schedule resolution: 3 levels per factor, 3^4 = 81 morphologies.
pub const TEMPORAL_GRID_LEVELS: usize = 3;

pub struct Population {
    pub envs: Vec<Env>,
    pub dr_mode: DrMode,
    schedule: Vec<ScalingFactors>,
    schedule_index: usize,
    rebuild_count: usize,
    base: crate::morphology::BaseRobotSpec,
    poly: PdCorrectionPoly,
    bounds: FactorBounds,
    task: Arc<TaskSpec>,
    master_seed: u64,
}

/// Per-env result of a population step.
#[derive(Debug, Clone)]
pub struct PopStepOutput {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub diverged: bool,
    /// Total non-discounted return of the episode that just ended, if any.
    pub finished_return: Option<f64>,
}

impl Population {
    /// Spawn `n` envs under `dr_mode`. `xi_override` pins every env to one
    /// morphology (used by fine-tuning and evaluation).
    pub fn spawn(
        cfg: &Config,
        n: usize,
        dr_mode: DrMode,
        master_seed: u64,
        xi_override: Option<ScalingFactors>,
    ) -> Result<Self, SimError> {
        let bounds = cfg.morphology.bounds()?;
        let poly = cfg.morphology.poly()?;
        let default_model = build_robot(&cfg.robot, &ScalingFactors::DEFAULT, &poly, &bounds)?;
        let (task, terrain) =
            TaskSpec::from_config(&cfg.task, default_model.stand_height, cfg.sim.gap_depth)?;
        let task = Arc::new(task);
        let terrain = Arc::new(terrain);
        let sim = Arc::new(cfg.sim.clone());

        let mut schedule = Vec::new();
        let mut schedule_index = 0;
        let xis: Vec<ScalingFactors> = match (xi_override, dr_mode) {
            (Some(xi), _) => vec![xi; n],
            (None, DrMode::None) => vec![ScalingFactors::DEFAULT; n],
            (None, DrMode::Spatial) => {
                let mut rng = stream(master_seed, domain::MORPHOLOGY, 0);
                (0..n).map(|_| sample_factors(&mut rng, &bounds)).collect()
            }
            (None, DrMode::Temporal) => {
                schedule = morphology_grid(TEMPORAL_GRID_LEVELS, &bounds)?;
                schedule_index = 0;
                vec![schedule[0]; n]
            }
        };

        let envs = xis
            .into_iter()
            .enumerate()
            .map(|(i, xi)| {
                let model = build_robot(&cfg.robot, &xi, &poly, &bounds)?;
                Ok(Env::new(
                    model,
                    Arc::clone(&task),
                    Arc::clone(&terrain),
                    Arc::clone(&sim),
                    master_seed,
                    i as u64,
                ))
            })
            .collect::<Result<Vec<_>, SimError>>()?;

        Ok(Self {
            envs,
            dr_mode,
            schedule,
            schedule_index,
            rebuild_count: 0,
            base: cfg.robot.clone(),
            poly,
            bounds,
            task,
            master_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn rebuild_count(&self) -> usize {
        self.rebuild_count
    }

    pub fn schedule_len(&self) -> usize {
        self.schedule.len()
    }

    /// Current observations of all envs (in env order).
    pub fn observations(&self) -> Vec<Observation> {
        self.envs.iter().map(|e| e.build_observation()).collect()
    }

    /// Reset every env.
    pub fn reset_all(&mut self) -> Vec<Observation> {
        self.envs.par_iter_mut().map(|e| e.reset()).collect()
    }

    /// Step every env with its action; envs that finish are auto-reset when
    /// `auto_reset` is set (the returned observation is then the fresh one).
    /// Work runs data-parallel across envs; outputs keep env order.
    pub fn step_all(
        &mut self,
        actions: &[[f64; 4]],
        auto_reset: bool,
    ) -> Result<Vec<PopStepOutput>, SimError> {
        assert_eq!(actions.len(), self.envs.len(), "one action per env");
        self.envs
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(env, action)| {
                let out = env.step(action)?;
                let diverged = env.diverged;
                let mut observation = out.observation;
                let mut finished_return = None;
                if out.done {
                    finished_return = Some(env.episode_return);
                    if auto_reset {
                        observation = env.reset();
                    }
                }
                Ok(PopStepOutput {
                    observation,
                    reward: out.reward,
                    done: out.done,
                    diverged,
                    finished_return,
                })
            })
            .collect()
    }

    /// Switch to the schedule entry for `progress` in [0, 1] (temporal mode
    /// only). Rebuilds and resets every env when the entry changes; the
    /// rebuild counter tracks schedule advances.
    pub fn temporal_advance(&mut self, progress: f64) -> Result<(), SimError> {
        if self.dr_mode != DrMode::Temporal {
            return Err(SimError::NotTemporal);
        }
        let len = self.schedule.len();
        let target = ((progress.clamp(0.0, 1.0) * len as f64).floor() as usize).min(len - 1);
        if target > self.schedule_index {
            self.rebuild_count += target - self.schedule_index;
            self.schedule_index = target;
            let xi = self.schedule[target];
            let model = build_robot(&self.base, &xi, &self.poly, &self.bounds)?;
            self.envs.par_iter_mut().for_each(|env| {
                let _ = env.set_model(model.clone());
            });
        }
        Ok(())
    }

    /// The morphology currently assigned to each env.
    pub fn current_xi(&self) -> Vec<ScalingFactors> {
        self.envs.iter().map(|e| e.model.xi).collect()
    }

    /// Build a robot for this population's base spec.
    pub fn build_model(&self, xi: &ScalingFactors) -> Result<RobotModel, SimError> {
        Ok(build_robot(&self.base, xi, &self.poly, &self.bounds)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    #[test]
    fn none_mode_spawns_identical_defaults() {
        let cfg = Config::default();
        let pop = Population::spawn(&cfg, 4, DrMode::None, 0, None).unwrap();
        for xi in pop.current_xi() {
            assert_eq!(xi, ScalingFactors::DEFAULT);
        }
    }

    #[test]
    fn spatial_mode_is_reproducible() {
        let cfg = Config::default();
        let a = Population::spawn(&cfg, 32, DrMode::Spatial, 123, None).unwrap();
        let b = Population::spawn(&cfg, 32, DrMode::Spatial, 123, None).unwrap();
        assert_eq!(a.current_xi(), b.current_xi());
        let c = Population::spawn(&cfg, 32, DrMode::Spatial, 124, None).unwrap();
        assert_ne!(a.current_xi(), c.current_xi());
        // Factors vary across envs and stay in bounds.
        let xis = a.current_xi();
        assert!(xis.windows(2).any(|w| w[0] != w[1]));
        for xi in xis {
            for &v in xi.as_slice() {
                assert!((0.6..=1.4).contains(&v));
            }
        }
    }

    #[test]
    fn temporal_mode_schedule() {
        let cfg = Config::default();
        let mut pop = Population::spawn(&cfg, 8, DrMode::Temporal, 0, None).unwrap();
        assert_eq!(pop.schedule_len(), 81);
        for xi in pop.current_xi() {
            assert_eq!(xi, ScalingFactors([0.6; 4]));
        }
        assert_eq!(pop.rebuild_count(), 0);

        pop.temporal_advance(0.5).unwrap();
        assert_eq!(pop.rebuild_count(), 40);
        let expected = morphology_grid(3, &FactorBounds::default()).unwrap()[40];
        for xi in pop.current_xi() {
            assert_eq!(xi, expected);
        }

        pop.temporal_advance(1.0).unwrap();
        assert_eq!(pop.rebuild_count(), 80);

        // Progress never retreats.
        pop.temporal_advance(0.1).unwrap();
        assert_eq!(pop.rebuild_count(), 80);
    }

    #[test]
    fn temporal_advance_rejected_for_other_modes() {
        let cfg = Config::default();
        let mut pop = Population::spawn(&cfg, 2, DrMode::None, 0, None).unwrap();
        assert!(matches!(
            pop.temporal_advance(0.5),
            Err(SimError::NotTemporal)
        ));
    }

    #[test]
    fn step_all_keeps_env_order_and_auto_resets() {
        let mut cfg = Config::default();
        cfg.task.episode_len = 3;
        let mut pop = Population::spawn(&cfg, 4, DrMode::None, 7, None).unwrap();
        let actions = vec![[0.0; 4]; 4];
        for _ in 0..2 {
            let outs = pop.step_all(&actions, true).unwrap();
            assert_eq!(outs.len(), 4);
            assert!(outs.iter().all(|o| !o.done));
        }
        let outs = pop.step_all(&actions, true).unwrap();
        assert!(outs.iter().all(|o| o.done));
        assert!(outs.iter().all(|o| o.finished_return.is_some()));
        // Auto-reset leaves envs ready to step again.
        let outs = pop.step_all(&actions, true).unwrap();
        assert!(outs.iter().all(|o| !o.done));
    }
}
