//! Clipped-surrogate PPO update with separate actor/critic Adam optimizers.
//!
//! Per-sample gradients are computed in fixed-size chunks that may run on
//! worker threads; chunk results are reduced sequentially in chunk order, so
//! the update is bitwise independent of the thread count.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{PpoConfig, RegMode};
use crate::nn::{AdamState, Cache, GaussianPolicy, Mlp};
use crate::ppo::{PpoError, RolloutBuffer};

/// Fixed gradient-chunk size (samples); independent of the thread count.
const GRAD_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Normalize advantages to zero mean, unit std over the whole batch.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    let std = (var + 1e-8).sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

struct ChunkGrads {
    actor: Vec<f64>,
    critic: Vec<f64>,
    actor_loss: f64,
    critic_loss: f64,
    clipped: usize,
}

/// One PPO update over the buffer: `epochs_per_update` passes of shuffled
/// minibatches. Advantages must already be normalized.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    critic: &mut Mlp,
    actor_opt: &mut AdamState,
    critic_opt: &mut AdamState,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    targets: &[f64],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, PpoError> {
    let n = buffer.len();
    assert_eq!(advantages.len(), n);
    assert_eq!(targets.len(), n);

    let mean_params = policy.mean.params().len();
    let actor_params = mean_params + policy.log_std.len();
    let mut stats = UpdateStats {
        entropy: policy.entropy(),
        ..Default::default()
    };
    let mut batches = 0usize;
    let mut total_samples = 0usize;
    let mut total_clipped = 0usize;

    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs_per_update {
        indices.shuffle(rng);
        for (mb_idx, minibatch) in indices.chunks(cfg.minibatch_size.min(n)).enumerate() {
            let mb = minibatch.len() as f64;

            // Per-chunk gradient accumulation (parallel), fixed-order reduce.
            let chunks: Vec<ChunkGrads> = minibatch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut out = ChunkGrads {
                        actor: vec![0.0; actor_params],
                        critic: vec![0.0; critic.params().len()],
                        actor_loss: 0.0,
                        critic_loss: 0.0,
                        clipped: 0,
                    };
                    let mut cache = Cache::default();
                    for &i in chunk {
                        let adv = advantages[i];

                        // Actor: clipped surrogate.
                        policy
                            .mean
                            .forward_cached(buffer.actor_obs_at(i), &mut cache);
                        let mean_out = cache.output().to_vec();
                        let action = buffer.action_at(i);
                        let logp_new = policy.log_prob_given_mean(&mean_out, action);
                        let ratio = (logp_new - buffer.log_probs[i]).exp();
                        let clipped_ratio =
                            ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
                        let unclipped = ratio * adv;
                        let clipped = clipped_ratio * adv;
                        out.actor_loss += -unclipped.min(clipped);
                        if (ratio - 1.0).abs() > cfg.clip_epsilon {
                            out.clipped += 1;
                        }
                        // Gradient flows only where min() picks the unclipped
                        // branch.
                        if unclipped <= clipped {
                            let coef = -ratio * adv;
                            let (d_mean, d_log_std) = policy.log_prob_grads(&mean_out, action);
                            let out_grad: Vec<f64> = d_mean.iter().map(|g| coef * g).collect();
                            policy
                                .mean
                                .backward(&cache, &out_grad, &mut out.actor[..mean_params]);
                            for (g, d) in out.actor[mean_params..].iter_mut().zip(&d_log_std) {
                                *g += coef * d;
                            }
                        }
                        // Entropy bonus: d entropy / d log_std_j = 1.
                        for g in out.actor[mean_params..].iter_mut() {
                            *g -= cfg.entropy_coef;
                        }

                        // Critic: 0.5 (V - target)^2 (+ beta V^2 in a_reg).
                        critic.forward_cached(buffer.critic_obs_at(i), &mut cache);
                        let v = cache.output()[0];
                        let diff = v - targets[i];
                        let mut loss = 0.5 * diff * diff;
                        let mut dv = diff;
                        if cfg.reg_mode == RegMode::AReg {
                            loss += cfg.activation_reg_beta * v * v;
                            dv += 2.0 * cfg.activation_reg_beta * v;
                        }
                        out.critic_loss += loss;
                        critic.backward(&cache, &[cfg.value_loss_coef * dv], &mut out.critic);
                    }
                    out
                })
                .collect();

            let mut actor_grads = vec![0.0; actor_params];
            let mut critic_grads = vec![0.0; critic.params().len()];
            let mut actor_loss = 0.0;
            let mut critic_loss = 0.0;
            for c in &chunks {
                for (acc, g) in actor_grads.iter_mut().zip(&c.actor) {
                    *acc += g;
                }
                for (acc, g) in critic_grads.iter_mut().zip(&c.critic) {
                    *acc += g;
                }
                actor_loss += c.actor_loss;
                critic_loss += c.critic_loss;
                total_clipped += c.clipped;
            }
            for g in actor_grads.iter_mut() {
                *g /= mb;
            }
            for g in critic_grads.iter_mut() {
                *g /= mb;
            }

            let finite = actor_grads
                .iter()
                .chain(critic_grads.iter())
                .all(|g| g.is_finite())
                && actor_loss.is_finite()
                && critic_loss.is_finite();
            if !finite {
                return Err(PpoError::NonFinite {
                    epoch,
                    minibatch: mb_idx,
                });
            }

            // Adam over the combined (mean net, log_std) actor parameters.
            let mut flat: Vec<f64> = Vec::with_capacity(actor_params);
            flat.extend_from_slice(policy.mean.params());
            flat.extend_from_slice(&policy.log_std);
            actor_opt.step(&mut flat, &actor_grads);
            policy
                .mean
                .params_mut()
                .copy_from_slice(&flat[..mean_params]);
            policy.log_std.copy_from_slice(&flat[mean_params..]);

            critic_opt.step(critic.params_mut(), &critic_grads);

            stats.actor_loss += actor_loss / mb - cfg.entropy_coef * policy.entropy();
            stats.critic_loss += critic_loss / mb;
            batches += 1;
            total_samples += minibatch.len();
        }
    }

    stats.actor_loss /= batches as f64;
    stats.critic_loss /= batches as f64;
    stats.clip_fraction = total_clipped as f64 / total_samples as f64;
    stats.entropy = policy.entropy();
    Ok(stats)
}
