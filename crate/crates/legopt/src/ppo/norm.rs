//! Running observation normalization (Welford), updated sequentially in env
//! order so results are independent of worker-thread count.
//!
//! One accumulator covers the full critic observation; the actor input is a
//! strict prefix of the critic layout, so normalizing an actor observation
//! uses the leading slice of the same statistics.

use crate::checkpoint::ObsNormState;

const CLIP: f64 = 10.0;
const VAR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            count: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// Absorb one observation (full critic layout).
    pub fn update(&mut self, obs: &[f64]) {
        debug_assert_eq!(obs.len(), self.mean.len());
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let delta = obs[i] - self.mean[i];
            self.mean[i] += delta / self.count;
            self.m2[i] += delta * (obs[i] - self.mean[i]);
        }
    }

    fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / self.count + VAR_EPS).sqrt()
        }
    }

    /// Normalize a prefix (or all) of the observation, clipping to +-10.
    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        debug_assert!(obs.len() <= self.mean.len());
        obs.iter()
            .enumerate()
            .map(|(i, &v)| ((v - self.mean[i]) / self.std(i)).clamp(-CLIP, CLIP))
            .collect()
    }

    pub fn to_state(&self) -> ObsNormState {
        ObsNormState {
            mean: self.mean.clone(),
            m2: self.m2.clone(),
            count: self.count,
        }
    }

    pub fn from_state(state: &ObsNormState) -> Self {
        Self {
            mean: state.mean.clone(),
            m2: state.m2.clone(),
            count: state.count,
        }
    }
}
