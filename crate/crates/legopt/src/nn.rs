//! Minimal dense-network substrate: forward pass, exact reverse-mode
//! gradients, Adam, and a diagonal-Gaussian policy head.
//!
//! Everything is 64-bit and hand-derived per layer; there is no autodiff
//! graph. Parameters live in one flat array (per layer: weights row-major
//! `out x in`, then biases), which keeps the optimizer and checkpoint
//! serialization trivial and bit-exact.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("checkpoint declares layer sizes {expected:?} but the model needs {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("parameter array length {got} does not match the declared shape ({expected})")]
    ParamLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

/// Fully-connected network with tanh hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// Forward-pass activations kept for the backward pass. `layers[0]` is the
/// input; `layers[l+1]` the output of layer l (post-tanh on hidden layers).
#[derive(Debug, Clone, Default)]
pub struct Cache {
    layers: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.layers
            .last()
            .expect("cache empty; run forward_cached first")
    }
}

/// Four-way unrolled dot product with a fixed summation order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..chunks {
        let i = 4 * k;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

impl Mlp {
    /// Zero-initialized network. `sizes` = [input, hidden .., output].
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "zero-width layer");
        let params = vec![0.0; Self::count_params(sizes)];
        Self {
            sizes: sizes.to_vec(),
            params,
            activation,
        }
    }

    /// Scaled-uniform fan-in initialization: weights U(+-1/sqrt(n_in)),
    /// biases zero. Draw order is layer by layer, weights row-major.
    pub fn init<R: Rng>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, activation);
        let mut offset = 0;
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for w in &mut net.params[offset..offset + n_in * n_out] {
                *w = rng.random_range(-bound..=bound);
            }
            offset += n_in * n_out + n_out;
        }
        net
    }

    pub fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Rebuild from a flat parameter array (checkpoint load).
    pub fn from_params(
        sizes: &[usize],
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        let expected = Self::count_params(sizes);
        if params.len() != expected {
            return Err(NnError::ParamLength {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            activation,
        })
    }

    /// (weights offset, biases offset) of layer l in the flat array.
    fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        let mut offset = 0;
        for l in 0..layer {
            offset += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        (offset, offset + self.sizes[layer] * self.sizes[layer + 1])
    }

    /// Plain forward pass. Panics if the input length is wrong (usage error).
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = Cache::default();
        self.forward_cached(input, &mut cache);
        cache.layers.pop().unwrap()
    }

    /// Forward pass that records activations for `backward`.
    pub fn forward_cached(&self, input: &[f64], cache: &mut Cache) {
        assert_eq!(
            input.len(),
            self.input_dim(),
            "input length {} does not match first layer size {}",
            input.len(),
            self.input_dim()
        );
        cache.layers.resize(self.num_layers() + 1, Vec::new());
        cache.layers[0].clear();
        cache.layers[0].extend_from_slice(input);

        let mut offset = 0;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = self.params[offset..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let last = l == self.num_layers() - 1;
            let (head, tail) = cache.layers.split_at_mut(l + 1);
            let x = &head[l];
            let y = &mut tail[0];
            y.clear();
            y.reserve(n_out);
            for o in 0..n_out {
                let mut v = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
                if !last {
                    v = match self.activation {
                        Activation::Tanh => v.tanh(),
                    };
                }
                y.push(v);
            }
            offset += n_in * n_out + n_out;
        }
    }

    /// Exact reverse-mode gradients. Accumulates parameter gradients into
    /// `grads` (same layout as `params`) and returns the input gradient.
    pub fn backward(&self, cache: &Cache, output_grad: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer shape");
        assert_eq!(
            output_grad.len(),
            self.output_dim(),
            "output gradient shape"
        );

        let mut grad_y = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let last = l == self.num_layers() - 1;
            let x = &cache.layers[l];
            let y = &cache.layers[l + 1];

            // d/dz through the activation.
            let mut gz = grad_y;
            if !last {
                for (g, &a) in gz.iter_mut().zip(y.iter()) {
                    match self.activation {
                        Activation::Tanh => *g *= 1.0 - a * a,
                    }
                }
            }

            let mut grad_x = vec![0.0; n_in];
            for o in 0..n_out {
                let g = gz[o];
                grads[b_off + o] += g;
                let row = &self.params[w_off + o * n_in..w_off + (o + 1) * n_in];
                let grow = &mut grads[w_off + o * n_in..w_off + (o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += g * x[i];
                    grad_x[i] += g * row[i];
                }
            }
            grad_y = grad_x;
        }
        grad_y
    }
}

/// Adam optimizer state over one flat parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize, alpha: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update with bias correction.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "params/optimizer shape");
        assert_eq!(grads.len(), self.m.len(), "grads/optimizer shape");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.alpha * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Diagonal-Gaussian policy: a mean network plus a state-independent
/// log-standard-deviation vector (trainable, appended after the mean
/// network's parameters in the actor's flat layout).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, log_std_init: f64) -> Self {
        let dim = mean.output_dim();
        Self {
            mean,
            log_std: vec![log_std_init; dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.mean.output_dim()
    }

    /// Total trainable parameter count (mean net + log_std).
    pub fn param_count(&self) -> usize {
        self.mean.params().len() + self.log_std.len()
    }

    /// Sample an action; draw order is one standard normal per dimension.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mean = self.mean.forward(obs);
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(&mu, &ls)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + ls.exp() * z
            })
            .collect();
        let logp = self.log_prob_given_mean(&mean, &action);
        (action, logp)
    }

    /// Deterministic (mean) action.
    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean.forward(obs)
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        let mean = self.mean.forward(obs);
        self.log_prob_given_mean(&mean, action)
    }

    pub fn log_prob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        debug_assert_eq!(mean.len(), action.len());
        let mut logp = 0.0;
        for ((&mu, &a), &ls) in mean.iter().zip(action).zip(&self.log_std) {
            let z = (a - mu) / ls.exp();
            logp += -0.5 * z * z - ls - 0.5 * LN_2PI;
        }
        logp
    }

    /// d log pi / d mean and d log pi / d log_std at (mean, action).
    pub fn log_prob_grads(&self, mean: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut d_mean = Vec::with_capacity(mean.len());
        let mut d_log_std = Vec::with_capacity(mean.len());
        for ((&mu, &a), &ls) in mean.iter().zip(action).zip(&self.log_std) {
            let inv_var = (-2.0 * ls).exp();
            let diff = a - mu;
            d_mean.push(diff * inv_var);
            d_log_std.push(diff * diff * inv_var - 1.0);
        }
        (d_mean, d_log_std)
    }

    /// Differential entropy of the diagonal Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (1.0 + LN_2PI))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line reference forward pass, independent of Mlp internals.
    fn reference_forward(sizes: &[usize], params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut offset = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut y = vec![0.0; n_out];
            for o in 0..n_out {
                let mut v = params[offset + n_in * n_out + o];
                for i in 0..n_in {
                    v += params[offset + o * n_in + i] * x[i];
                }
                y[o] = if l + 1 < sizes.len() - 1 { v.tanh() } else { v };
            }
            offset += (n_in + 1) * n_out;
            x = y;
        }
        x
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Tanh);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut net = Mlp::zeros(&[3, 3], Activation::Tanh);
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.3, -0.7, 1.1];
        assert_eq!(net.forward(&x), x.to_vec());
    }

    #[test]
    fn forward_matches_reference_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let net = Mlp::init(&[7, 11, 5, 3], Activation::Tanh, &mut rng);
            let input: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = net.forward(&input);
            let expected = reference_forward(net.sizes(), net.params(), &input);
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() <= 1e-12, "forward mismatch {g} vs {e}");
            }
        }
    }

    #[test]
    fn backward_linear_net_gradient() {
        // y = w*x: dy/dw = x, dy/db = 1, dy/dx = w.
        let mut net = Mlp::zeros(&[1, 1], Activation::Tanh);
        net.params_mut()[0] = 3.0;
        let mut cache = Cache::default();
        net.forward_cached(&[2.0], &mut cache);
        let mut grads = vec![0.0; 2];
        let input_grad = net.backward(&cache, &[1.0], &mut grads);
        assert_eq!(grads, vec![2.0, 1.0]);
        assert_eq!(input_grad, vec![3.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[4, 8, 2], Activation::Tanh, &mut rng);
        let mut cache = Cache::default();
        net.forward_cached(&[0.1, 0.2, 0.3, 0.4], &mut cache);
        let mut grads = vec![0.0; net.params().len()];
        net.backward(&cache, &[0.0, 0.0], &mut grads);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let mut net = Mlp::init(&[5, 9, 6, 2], Activation::Tanh, &mut rng);
            let input: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
            // Scalar loss: weighted sum of outputs.
            let wout: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut cache = Cache::default();
            net.forward_cached(&input, &mut cache);
            let mut grads = vec![0.0; net.params().len()];
            net.backward(&cache, &wout, &mut grads);

            let h = 1e-6;
            // Probe a subset of parameters to keep the test brisk.
            for pi in (0..net.params().len()).step_by(7) {
                let orig = net.params()[pi];
                net.params_mut()[pi] = orig + h;
                let up: f64 = net
                    .forward(&input)
                    .iter()
                    .zip(&wout)
                    .map(|(y, w)| y * w)
                    .sum();
                net.params_mut()[pi] = orig - h;
                let down: f64 = net
                    .forward(&input)
                    .iter()
                    .zip(&wout)
                    .map(|(y, w)| y * w)
                    .sum();
                net.params_mut()[pi] = orig;
                let fd = (up - down) / (2.0 * h);
                let denom = fd.abs().max(1e-6);
                worst = worst.max((grads[pi] - fd).abs() / denom);
            }
        }
        assert!(worst <= 1e-5, "max relative gradient error {worst}");
    }

    #[test]
    fn adam_zero_grads_leave_params() {
        let mut params = vec![0.5, -1.0, 2.0];
        let mut opt = AdamState::new(3, 0.1);
        opt.step(&mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, vec![0.5, -1.0, 2.0]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_descends_quadratic() {
        // f(w) = w^2: one step from w = 1 must decrease w.
        let mut params = vec![1.0];
        let mut opt = AdamState::new(1, 0.1);
        opt.step(&mut params, &[2.0]);
        assert!(params[0] < 1.0);

        // 1000 steps converge to the optimum of 0.5*||w - w*||^2.
        let target = [0.3, -0.8, 1.7, 0.0];
        let mut w = vec![0.0; 4];
        let mut opt = AdamState::new(4, 0.05);
        for _ in 0..1000 {
            let grads: Vec<f64> = w.iter().zip(&target).map(|(wi, t)| wi - t).collect();
            opt.step(&mut w, &grads);
        }
        for (wi, t) in w.iter().zip(&target) {
            assert!((wi - t).abs() <= 1e-3, "w = {wi}, target {t}");
        }
    }

    #[test]
    fn gaussian_logprob_closed_forms() {
        let mean = Mlp::zeros(&[3, 4], Activation::Tanh);
        let mut policy = GaussianPolicy::new(mean, 0.0);
        let obs = [0.0; 3];
        // Action at the mean with unit std: logp = -(d/2) ln(2 pi).
        let logp = policy.log_prob(&obs, &[0.0; 4]);
        assert!((logp - (-2.0 * LN_2PI)).abs() <= 1e-12);

        // Doubling std lowers logp at the mean by d*ln 2.
        let before = policy.log_prob(&obs, &[0.0; 4]);
        for ls in &mut policy.log_std {
            *ls += core::f64::consts::LN_2;
        }
        let after = policy.log_prob(&obs, &[0.0; 4]);
        assert!((before - after - 4.0 * core::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        // Monte-Carlo estimate of the density integral over a +-6 sigma box.
        let mean = Mlp::zeros(&[2, 4], Activation::Tanh);
        let policy = GaussianPolicy::new(mean, -1.0);
        let obs = [0.0; 2];
        let sigma = (-1.0f64).exp();
        let half = 6.0 * sigma;
        let volume = (2.0 * half).powi(4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples = 4_000_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let a: [f64; 4] = core::array::from_fn(|_| rng.random_range(-half..half));
            acc += policy.log_prob(&obs, &a).exp();
        }
        let integral = volume * acc / samples as f64;
        assert!((integral - 1.0).abs() <= 0.02, "MC integral {integral}");
    }

    #[test]
    fn logprob_grads_match_finite_differences() {
        let mean_net = Mlp::zeros(&[2, 3], Activation::Tanh);
        let mut policy = GaussianPolicy::new(mean_net, -0.5);
        policy.log_std = vec![-0.2, 0.1, -0.7];
        let mean = vec![0.3, -0.4, 0.9];
        let action = vec![0.5, -0.1, 0.4];
        let (d_mean, d_ls) = policy.log_prob_grads(&mean, &action);
        let h = 1e-7;
        for k in 0..3 {
            let mut mp = mean.clone();
            mp[k] += h;
            let mut mm = mean.clone();
            mm[k] -= h;
            let fd = (policy.log_prob_given_mean(&mp, &action)
                - policy.log_prob_given_mean(&mm, &action))
                / (2.0 * h);
            assert!((d_mean[k] - fd).abs() <= 1e-6);

            let mut pp = policy.clone();
            pp.log_std[k] += h;
            let mut pm = policy.clone();
            pm.log_std[k] -= h;
            let fd = (pp.log_prob_given_mean(&mean, &action)
                - pm.log_prob_given_mean(&mean, &action))
                / (2.0 * h);
            assert!((d_ls[k] - fd).abs() <= 1e-6);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = Mlp::init(&[4, 8, 3], Activation::Tanh, &mut rng);
        let policy = GaussianPolicy::new(net, -1.0);
        let obs = [0.2, -0.1, 0.4, 0.05];
        let mut r1 = ChaCha8Rng::seed_from_u64(500);
        let mut r2 = ChaCha8Rng::seed_from_u64(500);
        let (a1, l1) = policy.sample(&obs, &mut r1);
        let (a2, l2) = policy.sample(&obs, &mut r2);
        assert_eq!(a1, a2);
        assert_eq!(l1.to_bits(), l2.to_bits());
    }
}
