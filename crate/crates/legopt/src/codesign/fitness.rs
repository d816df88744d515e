//! Fitness evaluation: mean non-discounted cumulative reward of the
//! deterministic (mean-action) policy over N identical robots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::codesign::CodesignError;
use crate::config::{Config, DrMode};
use crate::morphology::ScalingFactors;
use crate::sim::observation::{ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use crate::sim::population::Population;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitnessReport {
    /// Mean non-discounted episode return over the N envs.
    pub fitness: f64,
    pub per_env_returns: Vec<f64>,
    /// Fraction of envs whose body crossed the obstacle.
    pub success_fraction: f64,
    /// Fraction of envs that diverged (their accrued return still counts).
    pub divergence_fraction: f64,
    pub mean_episode_len: f64,
    pub xi: ScalingFactors,
    pub seed: u64,
    pub envs: usize,
    pub steps: usize,
}

/// Per-step trace row for `eval --trace`.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub step: usize,
    pub body_x: f64,
    pub body_z: f64,
    pub pitch: f64,
    pub joints: [f64; 4],
    pub reward: crate::sim::RewardBreakdown,
}

/// Evaluate `checkpoint` at morphology `xi`: N identical envs, mean actions,
/// episodes of at most `steps` policy steps, no observation-statistics
/// updates. Optionally records a per-step trace of env 0.
pub fn evaluate_fitness(
    cfg: &Config,
    checkpoint: &Checkpoint,
    xi: ScalingFactors,
    n_envs: usize,
    steps: usize,
    seed: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<FitnessReport, CodesignError> {
    checkpoint.expect_dims(ACTOR_OBS_DIM, CRITIC_OBS_DIM)?;
    let (policy, _critic, norm) = checkpoint.instantiate()?;

    // Episodes are capped by the fitness horizon, not the task default.
    let mut eval_cfg = cfg.clone();
    eval_cfg.task.episode_len = steps;
    let mut population = Population::spawn(&eval_cfg, n_envs, DrMode::None, seed, Some(xi))?;

    let mut observations = population.observations();
    let mut episode_lens = vec![0usize; n_envs];

    for step in 0..steps {
        if population.envs.iter().all(|e| e.done) {
            break;
        }
        // Mean actions from frozen normalization stats; envs advance in
        // parallel, already-finished envs hold still.
        type StepResult = Option<(crate::sim::Observation, crate::sim::RewardBreakdown)>;
        let step_results: Vec<StepResult> = population
            .envs
            .par_iter_mut()
            .zip(observations.par_iter())
            .map(|(env, obs)| {
                if env.done {
                    return Ok(None);
                }
                let actor_obs = norm.normalize(obs.actor());
                let mean = policy.mean_action(&actor_obs);
                let action = [mean[0], mean[1], mean[2], mean[3]];
                let out = env.step(&action)?;
                Ok(Some((out.observation, out.reward)))
            })
            .collect::<Result<_, crate::sim::SimError>>()?;

        for (e, result) in step_results.into_iter().enumerate() {
            let Some((next, reward)) = result else {
                continue;
            };
            observations[e] = next;
            episode_lens[e] = step + 1;
            if e == 0 {
                if let Some(rows) = trace.as_deref_mut() {
                    let env = &population.envs[0];
                    rows.push(TraceRow {
                        step,
                        body_x: env.state.dynamics.q[0],
                        body_z: env.state.dynamics.q[1],
                        pitch: env.state.pitch(),
                        joints: env.state.dynamics.joint_angles(),
                        reward,
                    });
                }
            }
        }
    }

    let per_env_returns: Vec<f64> = population.envs.iter().map(|e| e.episode_return).collect();
    let fitness = per_env_returns.iter().sum::<f64>() / n_envs as f64;
    let success = population
        .envs
        .iter()
        .filter(|e| e.obstacle_crossed())
        .count() as f64
        / n_envs as f64;
    let diverged = population.envs.iter().filter(|e| e.diverged).count() as f64 / n_envs as f64;
    let mean_episode_len = episode_lens.iter().sum::<usize>() as f64 / n_envs as f64;

    Ok(FitnessReport {
        fitness,
        per_env_returns,
        success_fraction: success,
        divergence_fraction: diverged,
        mean_episode_len,
        xi,
        seed,
        envs: n_envs,
        steps,
    })
}
