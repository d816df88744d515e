//! PPO trainer with asymmetric actor-critic, GAE under the regularized
//! discount, the activation-regularization baseline, the discount-equivalence
//! verifier and the fine-tuning entry point.

pub mod gae;
pub mod norm;
pub mod rollout;
pub mod tdzero;
pub mod train;
pub mod update;

pub use gae::compute_gae;
pub use rollout::collect_rollout;
pub use tdzero::{equivalence_check, td0_value_update, theorem_beta};
pub use train::{finetune, train, EpochStats, TrainOutput, TrainSetup};
pub use update::{ppo_update, UpdateStats};

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("non-finite loss at ppo epoch {epoch}, minibatch {minibatch}; update aborted")]
    NonFinite { epoch: usize, minibatch: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// On-policy trajectories, step-major: index = step * n_envs + env.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_steps: usize,
    pub n_envs: usize,
    pub actor_obs_dim: usize,
    pub critic_obs_dim: usize,
    pub action_dim: usize,
    pub actor_obs: Vec<f64>,
    pub critic_obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// V(s_T) per env for truncated-trajectory bootstrapping.
    pub bootstrap_values: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(
        n_steps: usize,
        n_envs: usize,
        actor_obs_dim: usize,
        critic_obs_dim: usize,
        action_dim: usize,
    ) -> Self {
        let n = n_steps * n_envs;
        Self {
            n_steps,
            n_envs,
            actor_obs_dim,
            critic_obs_dim,
            action_dim,
            actor_obs: vec![0.0; n * actor_obs_dim],
            critic_obs: vec![0.0; n * critic_obs_dim],
            actions: vec![0.0; n * action_dim],
            values: vec![0.0; n],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            dones: vec![false; n],
            bootstrap_values: vec![0.0; n_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[allow(clippy::too_many_arguments)]
    pub fn store(
        &mut self,
        step: usize,
        env: usize,
        actor_obs: &[f64],
        critic_obs: &[f64],
        action: &[f64],
        value: f64,
        log_prob: f64,
        reward: f64,
        done: bool,
    ) {
        let i = step * self.n_envs + env;
        self.actor_obs[i * self.actor_obs_dim..(i + 1) * self.actor_obs_dim]
            .copy_from_slice(actor_obs);
        self.critic_obs[i * self.critic_obs_dim..(i + 1) * self.critic_obs_dim]
            .copy_from_slice(critic_obs);
        self.actions[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(action);
        self.values[i] = value;
        self.log_probs[i] = log_prob;
        self.rewards[i] = reward;
        self.dones[i] = done;
    }

    pub fn actor_obs_at(&self, i: usize) -> &[f64] {
        &self.actor_obs[i * self.actor_obs_dim..(i + 1) * self.actor_obs_dim]
    }

    pub fn critic_obs_at(&self, i: usize) -> &[f64] {
        &self.critic_obs[i * self.critic_obs_dim..(i + 1) * self.critic_obs_dim]
    }

    pub fn action_at(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }
}
