//! Exact-SGD TD(0) value updates and the discount-regularization equivalence
//! verifier.
//!
//! The verifier runs two TD(0) parameter sequences over one shared transition
//! stream: run A uses discount gamma, learning rate alpha, plain rewards and
//! no regularizer; run B uses discount gamma_reg, rewards scaled by
//! gamma_reg/gamma, learning rate (gamma/gamma_reg)*alpha and an activation
//! regularizer beta*V(s)^2 with beta = (gamma_reg - gamma)/(2*gamma). By
//! induction the two parameter sequences coincide; in 64-bit arithmetic the
//! max deviation over a few hundred steps stays far below 1e-8. A deliberately
//! wrong beta destroys the identity, which serves as the negative control.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Activation, Cache, Mlp};
use crate::rng::{domain, stream};

/// One exact-SGD TD(0) update on a single transition:
/// params += alpha * [(reward_scale*r + gamma*V(s') - V(s)) - 2*beta*V(s)] * grad V(s).
///
/// `beta = 0`, `reward_scale = 1` is the plain TD(0) update.
#[allow(clippy::too_many_arguments)]
pub fn td0_value_update(
    critic: &mut Mlp,
    s: &[f64],
    reward: f64,
    s_next: &[f64],
    gamma: f64,
    alpha: f64,
    reward_scale: f64,
    beta: f64,
) {
    let v_next = critic.forward(s_next)[0];
    let mut cache = Cache::default();
    critic.forward_cached(s, &mut cache);
    let v = cache.output()[0];

    let mut grads = vec![0.0; critic.params().len()];
    critic.backward(&cache, &[1.0], &mut grads);

    let delta = reward_scale * reward + gamma * v_next - v;
    let coef = alpha * (delta - 2.0 * beta * v);
    for (p, g) in critic.params_mut().iter_mut().zip(&grads) {
        *p += coef * g;
    }
}

/// The theorem's regularizer coefficient.
pub fn theorem_beta(gamma: f64, gamma_reg: f64) -> f64 {
    (gamma_reg - gamma) / (2.0 * gamma)
}

/// Dual-run equivalence check. Returns the maximum infinity-norm parameter
/// deviation over `steps` TD(0) updates on a shared random transition
/// stream. `beta_override` replaces the theorem's beta in run B (negative
/// control).
pub fn equivalence_check(
    seed: u64,
    steps: usize,
    gamma: f64,
    gamma_reg: f64,
    hidden: &[usize],
    beta_override: Option<f64>,
) -> f64 {
    const STATE_DIM: usize = 8;
    const ALPHA: f64 = 0.05;

    let mut sizes = vec![STATE_DIM];
    sizes.extend_from_slice(hidden);
    sizes.push(1);

    let mut init_rng = stream(seed, domain::EQUIVALENCE, 0);
    let phi0 = Mlp::init(&sizes, Activation::Tanh, &mut init_rng);
    let mut phi = phi0.clone();
    let mut omega = phi0;

    let beta = beta_override.unwrap_or_else(|| theorem_beta(gamma, gamma_reg));
    let reward_scale = gamma_reg / gamma;
    let alpha_prime = (gamma / gamma_reg) * ALPHA;

    let mut transitions: ChaCha8Rng = stream(seed, domain::EQUIVALENCE, 1);
    let mut max_dev = 0.0f64;
    for _ in 0..steps {
        let s: Vec<f64> = (0..STATE_DIM)
            .map(|_| transitions.random_range(-1.0..1.0))
            .collect();
        let reward: f64 = transitions.random_range(-1.0..1.0);
        let s_next: Vec<f64> = (0..STATE_DIM)
            .map(|_| transitions.random_range(-1.0..1.0))
            .collect();

        td0_value_update(&mut phi, &s, reward, &s_next, gamma, ALPHA, 1.0, 0.0);
        td0_value_update(
            &mut omega,
            &s,
            reward,
            &s_next,
            gamma_reg,
            alpha_prime,
            reward_scale,
            beta,
        );

        let dev = phi
            .params()
            .iter()
            .zip(omega.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_dev = max_dev.max(dev);
    }
    max_dev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_leaves_params() {
        let mut critic = Mlp::zeros(&[2, 4, 1], Activation::Tanh);
        let before = critic.params().to_vec();
        td0_value_update(
            &mut critic,
            &[0.5, -0.5],
            1.0,
            &[0.1, 0.2],
            0.9,
            0.0,
            1.0,
            0.0,
        );
        assert_eq!(critic.params(), before.as_slice());
    }

    #[test]
    fn linear_value_hand_case() {
        // V = w*s (bias present but grad d V/db = 1; s' = 0 so V(s') uses b
        // only). With w = b = 0: delta = r = 1, grad V(s) = (s, 1),
        // so w <- alpha * s = 0.1, b <- 0.1.
        let mut critic = Mlp::zeros(&[1, 1], Activation::Tanh);
        td0_value_update(&mut critic, &[1.0], 1.0, &[0.0], 0.9, 0.1, 1.0, 0.0);
        assert!((critic.params()[0] - 0.1).abs() <= 1e-15);
        assert!((critic.params()[1] - 0.1).abs() <= 1e-15);
    }

    #[test]
    fn beta_term_matches_symbolic_derivative() {
        // The regularizer contributes -alpha * 2*beta*V(s) * grad V(s):
        // difference between beta != 0 and beta = 0 runs must equal it.
        let mut with_beta = Mlp::zeros(&[1, 1], Activation::Tanh);
        with_beta.params_mut().copy_from_slice(&[0.8, 0.3]);
        let mut without = with_beta.clone();
        let (s, r, sn) = ([0.6], 0.4, [-0.2]);
        let (alpha, beta) = (0.1, 0.25);
        let v = with_beta.forward(&s)[0];
        td0_value_update(&mut with_beta, &s, r, &sn, 0.9, alpha, 1.0, beta);
        td0_value_update(&mut without, &s, r, &sn, 0.9, alpha, 1.0, 0.0);
        // grad V = (s, 1) for the linear net.
        let expected_w = -alpha * 2.0 * beta * v * s[0];
        let expected_b = -alpha * 2.0 * beta * v;
        assert!((with_beta.params()[0] - without.params()[0] - expected_w).abs() <= 1e-12);
        assert!((with_beta.params()[1] - without.params()[1] - expected_b).abs() <= 1e-12);
    }

    #[test]
    fn equal_discounts_give_zero_deviation() {
        // gamma_reg = gamma: beta = 0, scale = 1, alpha' = alpha -> the two
        // runs execute identical arithmetic.
        let dev = equivalence_check(3, 50, 0.95, 0.95, &[16, 16], None);
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn theorem_holds_across_seeds() {
        for seed in 0..10 {
            let dev = equivalence_check(seed, 200, 0.99, 0.9, &[16, 16], None);
            assert!(dev <= 1e-8, "seed {seed}: deviation {dev}");
        }
    }

    #[test]
    fn wrong_beta_negative_control() {
        let wrong = -theorem_beta(0.99, 0.9); // sign flipped
        let dev = equivalence_check(0, 200, 0.99, 0.9, &[16, 16], Some(wrong));
        assert!(
            dev > 1e-3,
            "wrong beta should break the identity, got {dev}"
        );
    }
}
