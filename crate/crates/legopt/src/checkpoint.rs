//! Checkpoint persistence: one JSON document holding both networks, the
//! observation-normalization statistics and the training metadata (including
//! the full effective config), with weights as plain decimal arrays.
//!
//! serde_json prints f64 in shortest round-trip form, so save/load is
//! bit-exact for finite values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DrMode, RegMode};
use crate::nn::{Activation, GaussianPolicy, Mlp, NnError};
use crate::ppo::norm::RunningNorm;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {got} (supported: {CHECKPOINT_VERSION})")]
    Version { got: u32 },
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error("checkpoint {field} length {got} does not match declared {expected}")]
    Length {
        field: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl MlpCheckpoint {
    pub fn from_mlp(net: &Mlp) -> Self {
        Self {
            layer_sizes: net.sizes().to_vec(),
            activation: net.activation(),
            params: net.params().to_vec(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp, CheckpointError> {
        Ok(Mlp::from_params(
            &self.layer_sizes,
            self.activation,
            self.params.clone(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormState {
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Training epochs this checkpoint has absorbed (pretraining epochs for
    /// a pretrained policy; fine-tuning epochs are tracked separately).
    pub epochs: usize,
    pub seed: u64,
    pub reg_mode: RegMode,
    pub dr_mode: DrMode,
    /// Effective config (after defaulting) the run used.
    pub config: serde_json::Value,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub actor: MlpCheckpoint,
    pub log_std: Vec<f64>,
    pub critic: MlpCheckpoint,
    pub obs_norm: ObsNormState,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_parts(
        policy: &GaussianPolicy,
        critic: &Mlp,
        norm: &RunningNorm,
        meta: CheckpointMeta,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            actor: MlpCheckpoint::from_mlp(&policy.mean),
            log_std: policy.log_std.clone(),
            critic: MlpCheckpoint::from_mlp(critic),
            obs_norm: norm.to_state(),
            meta,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { got: self.version });
        }
        for net in [&self.actor, &self.critic] {
            let expected = Mlp::count_params(&net.layer_sizes);
            if net.params.len() != expected {
                return Err(NnError::ParamLength {
                    expected,
                    got: net.params.len(),
                }
                .into());
            }
        }
        let action_dim = *self.actor.layer_sizes.last().unwrap();
        if self.log_std.len() != action_dim {
            return Err(CheckpointError::Length {
                field: "log_std",
                expected: action_dim,
                got: self.log_std.len(),
            });
        }
        if self.obs_norm.m2.len() != self.obs_norm.mean.len() {
            return Err(CheckpointError::Length {
                field: "obs_norm.m2",
                expected: self.obs_norm.mean.len(),
                got: self.obs_norm.m2.len(),
            });
        }
        Ok(())
    }

    /// Check the stored nets against the input sizes the current config
    /// expects, naming both shapes on mismatch.
    pub fn expect_dims(&self, actor_in: usize, critic_in: usize) -> Result<(), CheckpointError> {
        if self.actor.layer_sizes.first() != Some(&actor_in) {
            return Err(NnError::ShapeMismatch {
                expected: self.actor.layer_sizes.clone(),
                got: vec![actor_in],
            }
            .into());
        }
        if self.critic.layer_sizes.first() != Some(&critic_in) {
            return Err(NnError::ShapeMismatch {
                expected: self.critic.layer_sizes.clone(),
                got: vec![critic_in],
            }
            .into());
        }
        Ok(())
    }

    /// Rebuild the runtime objects.
    pub fn instantiate(&self) -> Result<(GaussianPolicy, Mlp, RunningNorm), CheckpointError> {
        let mean = self.actor.to_mlp()?;
        let critic = self.critic.to_mlp()?;
        let policy = GaussianPolicy {
            mean,
            log_std: self.log_std.clone(),
        };
        let norm = RunningNorm::from_state(&self.obs_norm);
        Ok((policy, critic, norm))
    }
}
