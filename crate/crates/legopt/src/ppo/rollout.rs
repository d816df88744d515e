//! On-policy rollout collection from a population.
//!
//! The actor consumes the (normalized) proprio + extero + history blocks; the
//! critic additionally receives the explicit-privileged and privileged
//! blocks. Envs step in parallel with snapshot parameters; per-env action
//! noise comes from each env's own stream, and all normalization/statistics
//! updates run sequentially in env order, so buffers are bitwise independent
//! of the thread count.

use rayon::prelude::*;

use crate::nn::{GaussianPolicy, Mlp};
use crate::ppo::norm::RunningNorm;
use crate::ppo::{PpoError, RolloutBuffer};
use crate::sim::observation::{Observation, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use crate::sim::population::Population;

struct EnvStepRecord {
    actor_obs: Vec<f64>,
    critic_obs: Vec<f64>,
    action: Vec<f64>,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
    next_obs: Observation,
    finished_return: Option<f64>,
}

/// Collected rollout plus the returns of episodes that finished during it
/// (in step-then-env order).
pub struct CollectOutput {
    pub buffer: RolloutBuffer,
    pub finished_returns: Vec<f64>,
    pub diverged_episodes: usize,
}

/// Roll the population forward `steps` policy steps. When `update_norm` is
/// set, the running statistics absorb each raw observation before it is
/// normalized (training mode); evaluation passes `false` to freeze them.
pub fn collect_rollout(
    policy: &GaussianPolicy,
    critic: &Mlp,
    norm: &mut RunningNorm,
    population: &mut Population,
    steps: usize,
    update_norm: bool,
) -> Result<CollectOutput, PpoError> {
    let n_envs = population.len();
    let action_dim = policy.action_dim();
    let mut buffer = RolloutBuffer::new(steps, n_envs, ACTOR_OBS_DIM, CRITIC_OBS_DIM, action_dim);
    let mut finished_returns = Vec::new();
    let mut diverged_episodes = 0usize;

    let mut observations = population.observations();

    for t in 0..steps {
        if update_norm {
            for obs in &observations {
                norm.update(obs.critic());
            }
        }

        // Parallel: normalize, act, step, (auto-)reset. Each env owns its
        // RNG; the iterator preserves env order.
        let records: Vec<EnvStepRecord> = population
            .envs
            .par_iter_mut()
            .zip(observations.par_iter())
            .map(|(env, obs)| {
                let actor_obs = norm.normalize(obs.actor());
                let critic_obs = norm.normalize(obs.critic());
                let (action, log_prob) = {
                    let mean = policy.mean.forward(&actor_obs);
                    let mut a = Vec::with_capacity(action_dim);
                    let rng = env.rng_mut();
                    for (k, &mu) in mean.iter().enumerate() {
                        let z: f64 = rand::Rng::sample(rng, rand_distr::StandardNormal);
                        a.push(mu + policy.log_std[k].exp() * z);
                    }
                    let logp = policy.log_prob_given_mean(&mean, &a);
                    (a, logp)
                };
                let value = critic.forward(&critic_obs)[0];

                let action_arr: [f64; 4] = [action[0], action[1], action[2], action[3]];
                let out = env.step(&action_arr)?;
                let mut next_obs = out.observation;
                let mut finished_return = None;
                if out.done {
                    finished_return = Some(env.episode_return);
                    next_obs = env.reset();
                }
                Ok(EnvStepRecord {
                    actor_obs,
                    critic_obs,
                    action,
                    log_prob,
                    value,
                    reward: out.reward.total,
                    done: out.done,
                    next_obs,
                    finished_return,
                })
            })
            .collect::<Result<_, crate::sim::SimError>>()?;

        // Sequential: write the buffer and harvest episode returns in env
        // order.
        for (e, rec) in records.into_iter().enumerate() {
            buffer.store(
                t,
                e,
                &rec.actor_obs,
                &rec.critic_obs,
                &rec.action,
                rec.value,
                rec.log_prob,
                rec.reward,
                rec.done,
            );
            if let Some(ret) = rec.finished_return {
                finished_returns.push(ret);
                if population.envs[e].diverged {
                    diverged_episodes += 1;
                }
            }
            observations[e] = rec.next_obs;
        }
    }

    // Bootstrap values for the truncated tails.
    for (e, obs) in observations.iter().enumerate() {
        let critic_obs = norm.normalize(obs.critic());
        buffer.bootstrap_values[e] = critic.forward(&critic_obs)[0];
    }

    Ok(CollectOutput {
        buffer,
        finished_returns,
        diverged_episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Config, DrMode};
    use crate::nn::Activation;
    use crate::rng::{domain, stream};
    use crate::sim::population::Population;

    fn tiny_setup(seed: u64) -> (GaussianPolicy, Mlp, RunningNorm, Population) {
        let mut cfg = Config::default();
        cfg.task.episode_len = 20;
        let mut rng = stream(seed, domain::ACTOR_INIT, 0);
        let policy = GaussianPolicy::new(
            Mlp::init(&[ACTOR_OBS_DIM, 16, 4], Activation::Tanh, &mut rng),
            -1.0,
        );
        let mut rng = stream(seed, domain::CRITIC_INIT, 0);
        let critic = Mlp::init(&[CRITIC_OBS_DIM, 16, 1], Activation::Tanh, &mut rng);
        let norm = RunningNorm::new(CRITIC_OBS_DIM);
        let pop = Population::spawn(&cfg, 4, DrMode::Spatial, seed, None).unwrap();
        (policy, critic, norm, pop)
    }

    #[test]
    fn buffer_shapes_match() {
        let (policy, critic, mut norm, mut pop) = tiny_setup(1);
        let out = collect_rollout(&policy, &critic, &mut norm, &mut pop, 1, true).unwrap();
        assert_eq!(out.buffer.n_steps, 1);
        assert_eq!(out.buffer.n_envs, 4);
        assert_eq!(out.buffer.actor_obs.len(), 4 * ACTOR_OBS_DIM);
        assert_eq!(out.buffer.bootstrap_values.len(), 4);
    }

    #[test]
    fn deterministic_replay_with_same_seed() {
        let (policy, critic, mut norm_a, mut pop_a) = tiny_setup(33);
        let out_a = collect_rollout(&policy, &critic, &mut norm_a, &mut pop_a, 25, true).unwrap();
        let (policy_b, critic_b, mut norm_b, mut pop_b) = tiny_setup(33);
        let out_b =
            collect_rollout(&policy_b, &critic_b, &mut norm_b, &mut pop_b, 25, true).unwrap();
        assert_eq!(out_a.buffer.actions, out_b.buffer.actions);
        assert_eq!(out_a.buffer.rewards, out_b.buffer.rewards);
        assert_eq!(out_a.buffer.log_probs, out_b.buffer.log_probs);
        assert_eq!(out_a.finished_returns, out_b.finished_returns);
        assert_eq!(norm_a, norm_b);
    }

    #[test]
    fn near_deterministic_policy_repeats() {
        let (mut policy, critic, _, _) = tiny_setup(7);
        for ls in &mut policy.log_std {
            *ls = -40.0;
        }
        let (_, _, mut norm_a, mut pop_a) = tiny_setup(7);
        let a = collect_rollout(&policy, &critic, &mut norm_a, &mut pop_a, 10, false).unwrap();
        let (_, _, mut norm_b, mut pop_b) = tiny_setup(7);
        let b = collect_rollout(&policy, &critic, &mut norm_b, &mut pop_b, 10, false).unwrap();
        assert_eq!(a.buffer.actions, b.buffer.actions);
        assert_eq!(a.buffer.rewards, b.buffer.rewards);
    }

    #[test]
    fn collapse_policy_underperforms_stance_policy() {
        // Scripted comparison: a constant fold-the-legs action vs holding the
        // nominal stance. The stance policy must collect a higher mean
        // return over one episode horizon.
        let run = |bias: f64, seed: u64| -> f64 {
            let mut cfg = Config::default();
            cfg.task.episode_len = 60;
            let mut policy =
                GaussianPolicy::new(Mlp::zeros(&[ACTOR_OBS_DIM, 4], Activation::Tanh), -40.0);
            // Constant action = bias on every joint.
            let n = policy.mean.params().len();
            for p in policy.mean.params_mut()[n - 4..].iter_mut() {
                *p = bias;
            }
            let critic = Mlp::zeros(&[CRITIC_OBS_DIM, 1], Activation::Tanh);
            let mut norm = RunningNorm::new(CRITIC_OBS_DIM);
            let mut pop = Population::spawn(&cfg, 4, DrMode::None, seed, None).unwrap();
            let out = collect_rollout(&policy, &critic, &mut norm, &mut pop, 60, false).unwrap();
            let rets = out.finished_returns;
            rets.iter().sum::<f64>() / rets.len().max(1) as f64
        };
        let collapse = run(-2.5, 5);
        let stance = run(0.0, 5);
        assert!(
            stance > collapse,
            "stance return {stance} must beat collapse return {collapse}"
        );
    }
}
