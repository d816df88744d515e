//! Generalized advantage estimation under the (possibly regularized)
//! discount: delta_t = r_t + gamma*V(s_{t+1}) - V(s_t),
//! A_t = sum_l (gamma*lambda)^l delta_{t+l}, truncated at episode boundaries.

use crate::ppo::RolloutBuffer;

/// Backward-recursion GAE. Returns (advantages, value targets), step-major
/// (`index = t * n_envs + env`). `gamma_eff` is gamma_reg in discount
/// regularization mode and gamma otherwise.
pub fn compute_gae(buffer: &RolloutBuffer, gamma_eff: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let (steps, envs) = (buffer.n_steps, buffer.n_envs);
    let mut advantages = vec![0.0; steps * envs];
    let mut targets = vec![0.0; steps * envs];

    for e in 0..envs {
        let mut last_adv = 0.0;
        for t in (0..steps).rev() {
            let i = t * envs + e;
            let nonterminal = if buffer.dones[i] { 0.0 } else { 1.0 };
            let next_value = if t + 1 == steps {
                buffer.bootstrap_values[e]
            } else {
                buffer.values[(t + 1) * envs + e]
            };
            let delta = buffer.rewards[i] + gamma_eff * next_value * nonterminal - buffer.values[i];
            last_adv = delta + gamma_eff * lambda * nonterminal * last_adv;
            advantages[i] = last_adv;
            targets[i] = last_adv + buffer.values[i];
        }
    }
    (advantages, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::RolloutBuffer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(T^2) brute-force oracle: A_t = sum_l (gamma*lambda)^l delta_{t+l},
    /// with the sum cut at the first episode boundary.
    fn brute_force_gae(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let steps = rewards.len();
        let delta = |t: usize| {
            let next = if dones[t] {
                0.0
            } else if t + 1 == steps {
                bootstrap
            } else {
                values[t + 1]
            };
            rewards[t] + gamma * next - values[t]
        };
        (0..steps)
            .map(|t| {
                let mut acc = 0.0;
                let mut weight = 1.0;
                for l in t..steps {
                    acc += weight * delta(l);
                    if dones[l] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    fn single_env_buffer(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
    ) -> RolloutBuffer {
        let steps = rewards.len();
        let mut buffer = RolloutBuffer::new(steps, 1, 1, 1, 1);
        for t in 0..steps {
            buffer.store(
                t,
                0,
                &[0.0],
                &[0.0],
                &[0.0],
                values[t],
                0.0,
                rewards[t],
                dones[t],
            );
        }
        buffer.bootstrap_values[0] = bootstrap;
        buffer
    }

    #[test]
    fn hand_computed_two_step_case() {
        // rewards [1, 1], values [0, 0, 0], gamma 0.9, lambda 0.95:
        // delta_1 = 1, delta_0 = 1, A_1 = 1, A_0 = 1 + 0.855 = 1.855.
        let buffer = single_env_buffer(&[1.0, 1.0], &[0.0, 0.0], &[false, false], 0.0);
        let (adv, targets) = compute_gae(&buffer, 0.9, 0.95);
        assert!((adv[0] - 1.855).abs() <= 1e-12);
        assert!((adv[1] - 1.0).abs() <= 1e-12);
        assert_eq!(targets[0], adv[0]);
    }

    #[test]
    fn lambda_zero_reduces_to_td_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let steps = rng.random_range(2..20);
            let rewards: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..steps).map(|_| rng.random_bool(0.15)).collect();
            let bootstrap = rng.random_range(-1.0..1.0);
            let buffer = single_env_buffer(&rewards, &values, &dones, bootstrap);
            let (adv, _) = compute_gae(&buffer, 0.95, 0.0);
            for t in 0..steps {
                let next = if dones[t] {
                    0.0
                } else if t + 1 == steps {
                    bootstrap
                } else {
                    values[t + 1]
                };
                let delta = rewards[t] + 0.95 * next - values[t];
                assert_eq!(adv[t], delta, "A_t must equal delta_t exactly at lambda 0");
            }
        }
    }

    #[test]
    fn lambda_one_no_dones_gives_monte_carlo_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let steps = rng.random_range(2..40);
            let gamma = 0.97;
            let rewards: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bootstrap = rng.random_range(-1.0..1.0);
            let dones = vec![false; steps];
            let buffer = single_env_buffer(&rewards, &values, &dones, bootstrap);
            let (_, targets) = compute_gae(&buffer, gamma, 1.0);
            // Discounted Monte-Carlo return with bootstrap tail.
            for t in 0..steps {
                let mut ret = 0.0;
                let mut w = 1.0;
                for l in t..steps {
                    ret += w * rewards[l];
                    w *= gamma;
                }
                ret += w * bootstrap;
                assert!(
                    (targets[t] - ret).abs() <= 1e-9,
                    "target {} vs MC return {ret}",
                    targets[t]
                );
            }
        }
    }

    #[test]
    fn matches_brute_force_on_random_buffers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let steps = rng.random_range(1..=64);
            let gamma = rng.random_range(0.8..0.999);
            let lambda = rng.random_range(0.0..=1.0);
            let rewards: Vec<f64> = (0..steps).map(|_| rng.random_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..steps).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dones: Vec<bool> = (0..steps).map(|_| rng.random_bool(0.1)).collect();
            let bootstrap = rng.random_range(-2.0..2.0);
            let buffer = single_env_buffer(&rewards, &values, &dones, bootstrap);
            let (adv, _) = compute_gae(&buffer, gamma, lambda);
            let oracle = brute_force_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
            for (a, o) in adv.iter().zip(&oracle) {
                worst = worst.max((a - o).abs());
            }
        }
        assert!(worst <= 1e-9, "max deviation from brute force {worst}");
    }

    #[test]
    fn multi_env_independence() {
        // Two envs with different streams must match two single-env runs.
        let mut buffer = RolloutBuffer::new(3, 2, 1, 1, 1);
        let r = [[1.0, -0.5], [0.3, 0.8], [0.0, 1.0]];
        let v = [[0.2, 0.1], [-0.1, 0.4], [0.3, -0.2]];
        let d = [[false, true], [true, false], [false, false]];
        for t in 0..3 {
            for e in 0..2 {
                buffer.store(t, e, &[0.0], &[0.0], &[0.0], v[t][e], 0.0, r[t][e], d[t][e]);
            }
        }
        buffer.bootstrap_values = vec![0.5, -0.5];
        let (adv, _) = compute_gae(&buffer, 0.9, 0.7);
        for e in 0..2 {
            let rewards: Vec<f64> = (0..3).map(|t| r[t][e]).collect();
            let values: Vec<f64> = (0..3).map(|t| v[t][e]).collect();
            let dones: Vec<bool> = (0..3).map(|t| d[t][e]).collect();
            let single = single_env_buffer(&rewards, &values, &dones, buffer.bootstrap_values[e]);
            let (adv_single, _) = compute_gae(&single, 0.9, 0.7);
            for t in 0..3 {
                assert_eq!(adv[t * 2 + e], adv_single[t]);
            }
        }
    }
}
