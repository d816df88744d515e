//! Global configuration: one JSON document with full defaulting.
//!
//! Every section and field has a default, so a partial (or empty) config file
//! is valid; unknown keys are rejected to fail fast on typos. The effective
//! config (after defaulting) is echoed into every output's metadata so a run
//! can be reproduced from any of its artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::morphology::{BaseRobotSpec, FactorBounds, MorphologyError, PdCorrectionPoly};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid config: {0}")]
    Morphology(#[from] MorphologyError),
}

/// Domain-randomization mode for population construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DrMode {
    /// Per-env morphology sampled independently at spawn time.
    Spatial,
    /// All envs share one morphology that steps through a fixed schedule.
    Temporal,
    /// All envs use the default morphology.
    None,
}

/// Critic regularization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    /// No regularization.
    Normal,
    /// Discount regularization: GAE and TD targets use gamma_reg.
    DReg,
    /// Activation regularization: critic loss gains beta * V(s)^2.
    AReg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LongJump,
    HighJump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphologyConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub pd_poly: PdCorrectionPoly,
    /// Reject (rather than renormalize) polynomials whose coefficients do
    /// not sum to 1.
    pub pd_poly_strict: bool,
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self {
            c_min: 0.6,
            c_max: 1.4,
            pd_poly: PdCorrectionPoly::default(),
            pd_poly_strict: false,
        }
    }
}

impl MorphologyConfig {
    pub fn bounds(&self) -> Result<FactorBounds, MorphologyError> {
        FactorBounds::new(self.c_min, self.c_max)
    }

    pub fn poly(&self) -> Result<PdCorrectionPoly, MorphologyError> {
        PdCorrectionPoly::new(
            self.pd_poly.a,
            self.pd_poly.b,
            self.pd_poly.c,
            self.pd_poly.d,
            self.pd_poly_strict,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub kind: TaskKind,
    /// Gap width (long jump) or platform height (high jump), in meters.
    pub obstacle_size: f64,
    /// x-position where the obstacle begins.
    pub obstacle_x: f64,
    /// Waypoint x-positions; z is the local terrain height plus the default
    /// robot's stand height.
    pub waypoint_xs: Vec<f64>,
    /// Target speed toward the next waypoint (m/s).
    pub v_cmd: f64,
    /// Episode length T in policy steps.
    pub episode_len: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::LongJump,
            obstacle_size: 0.3,
            obstacle_x: 1.5,
            waypoint_xs: vec![1.0, 2.5],
            v_cmd: 0.8,
            episode_len: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactConfig {
    /// Normal penalty spring stiffness (N/m).
    pub stiffness: f64,
    /// Normal damping (N s/m).
    pub damping: f64,
    /// Tangential damping used inside the Coulomb cone (N s/m).
    pub tangential_damping: f64,
    /// Clamp on the normal force magnitude (N).
    pub max_force: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            stiffness: 2.0e4,
            damping: 2.0e2,
            tangential_damping: 1.0e3,
            max_force: 600.0,
        }
    }
}

/// Weights for the reward terms. `yaw_tracking` is kept for schema fidelity
/// but has no planar counterpart and is ignored by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub goal_tracking: f64,
    pub clearance: f64,
    pub yaw_tracking: f64,
    pub lin_vel_z: f64,
    pub pitch_rate: f64,
    pub action_rate: f64,
    pub joint_accel: f64,
    pub joint_cosmetic: f64,
    pub torque_change: f64,
    pub torque_penalty: f64,
    pub orientation: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            goal_tracking: 1.5,
            clearance: -1.0,
            yaw_tracking: 0.0,
            lin_vel_z: -1.0,
            pitch_rate: -0.05,
            action_rate: -0.1,
            joint_accel: -2.5e-7,
            joint_cosmetic: -0.04,
            torque_change: -1.0e-7,
            torque_penalty: -1.0e-5,
            orientation: -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResetNoise {
    /// Uniform joint-angle noise half-range (rad).
    pub joint: f64,
    /// Uniform pitch noise half-range (rad).
    pub pitch: f64,
}

impl Default for ResetNoise {
    fn default() -> Self {
        Self {
            joint: 0.03,
            pitch: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub gravity: f64,
    /// PD inner-loop rate (Hz).
    pub pd_hz: f64,
    /// PD ticks per policy step (50 Hz policy at the default 200 Hz / 4).
    pub control_decimation: usize,
    /// Integrator substeps per PD tick.
    pub substeps: usize,
    pub contact: ContactConfig,
    /// Classical (temporal) DR ranges drawn once per episode.
    pub friction_range: [f64; 2],
    pub motor_strength_range: [f64; 2],
    pub reset_noise: ResetNoise,
    /// Target angle = nominal pose + action_scale * action.
    pub action_scale: f64,
    pub capture_radius: f64,
    /// |pitch| beyond this terminates the episode (rad).
    pub pitch_limit: f64,
    /// Body z below this terminates the episode (fell into a gap).
    pub fall_z: f64,
    /// Torque limit per joint (N m).
    pub tau_max: f64,
    /// Passive joint damping (N m s/rad).
    pub joint_damping: f64,
    /// Depth assigned to gap regions of the heightfield (m).
    pub gap_depth: f64,
    pub reward_weights: RewardWeights,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            pd_hz: 200.0,
            control_decimation: 4,
            substeps: 4,
            contact: ContactConfig::default(),
            friction_range: [0.5, 1.1],
            motor_strength_range: [0.9, 1.1],
            reset_noise: ResetNoise::default(),
            action_scale: 0.5,
            capture_radius: 0.1,
            pitch_limit: 1.2,
            fall_z: -0.5,
            tau_max: 33.5,
            joint_damping: 0.0,
            gap_depth: 10.0,
            reward_weights: RewardWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gamma_reg: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub value_loss_coef: f64,
    /// Activation-regularization coefficient for the a_reg baseline.
    pub activation_reg_beta: f64,
    pub reg_mode: RegMode,
    /// Steps collected per env per epoch.
    pub rollout_len: usize,
    pub total_epochs: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub log_std_init: f64,
    /// Checkpoint every k epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gamma_reg: 0.97,
            lambda: 0.95,
            clip_epsilon: 0.2,
            epochs_per_update: 4,
            minibatch_size: 4096,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            entropy_coef: 5e-3,
            value_loss_coef: 1.0,
            activation_reg_beta: 1e-3,
            reg_mode: RegMode::DReg,
            rollout_len: 64,
            total_epochs: 300,
            actor_hidden: vec![128, 128, 128],
            critic_hidden: vec![256, 256, 256],
            log_std_init: -1.0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoConfig {
    /// Initial design size (baseline morphology + stratified random points).
    pub initial_design: usize,
    /// BO iterations after the initial design.
    pub iterations: usize,
    /// EI exploration offset as a fraction of the observed fitness range.
    pub ei_offset_frac: f64,
    /// Multistart count for acquisition maximization.
    pub multistarts: usize,
    /// Fine-tuning epochs per candidate.
    pub finetune_epochs: usize,
    /// Envs per fitness evaluation (N in the fitness average).
    pub fitness_envs: usize,
    /// Steps per fitness episode (T).
    pub fitness_steps: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            initial_design: 8,
            iterations: 20,
            ei_offset_frac: 0.01,
            multistarts: 16,
            finetune_epochs: 30,
            fitness_envs: 16,
            fitness_steps: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of parallel training environments (N).
    pub num_envs: usize,
    pub out_dir: String,
    pub dr_mode: DrMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_envs: 256,
            out_dir: "out".into(),
            dr_mode: DrMode::Spatial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub robot: BaseRobotSpec,
    pub morphology: MorphologyConfig,
    pub task: TaskConfig,
    pub sim: SimConfig,
    pub ppo: PpoConfig,
    pub bo: BoConfig,
    pub run: RunConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.robot.validate()?;
        self.morphology.bounds()?;
        self.morphology.poly()?;

        let t = &self.task;
        if t.obstacle_size <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "task.obstacle_size must be > 0, got {}",
                t.obstacle_size
            )));
        }
        if t.v_cmd <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "task.v_cmd must be > 0, got {}",
                t.v_cmd
            )));
        }
        if t.waypoint_xs.len() < 2 {
            return Err(ConfigError::Invalid(
                "task.waypoint_xs needs at least 2 waypoints".into(),
            ));
        }
        if t.waypoint_xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid(
                "task.waypoint_xs must be strictly increasing".into(),
            ));
        }
        if t.episode_len == 0 {
            return Err(ConfigError::Invalid("task.episode_len must be >= 1".into()));
        }

        let s = &self.sim;
        if !(s.pd_hz > 0.0 && s.control_decimation >= 1 && s.substeps >= 1) {
            return Err(ConfigError::Invalid(
                "sim.pd_hz, control_decimation and substeps must be positive".into(),
            ));
        }
        for (name, range) in [
            ("friction_range", s.friction_range),
            ("motor_strength_range", s.motor_strength_range),
        ] {
            if !(range[0] > 0.0 && range[0] <= range[1]) {
                return Err(ConfigError::Invalid(format!(
                    "sim.{name} must satisfy 0 < lo <= hi, got {range:?}"
                )));
            }
        }
        if s.tau_max <= 0.0 {
            return Err(ConfigError::Invalid("sim.tau_max must be > 0".into()));
        }

        let p = &self.ppo;
        if !(p.gamma_reg > 0.0 && p.gamma_reg <= p.gamma && p.gamma < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "ppo discounts must satisfy 0 < gamma_reg <= gamma < 1, got gamma_reg = {}, gamma = {}",
                p.gamma_reg, p.gamma
            )));
        }
        if !(0.0..=1.0).contains(&p.lambda) {
            return Err(ConfigError::Invalid(format!(
                "ppo.lambda must lie in [0, 1], got {}",
                p.lambda
            )));
        }
        if p.clip_epsilon <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "ppo.clip_epsilon must be > 0, got {}",
                p.clip_epsilon
            )));
        }
        if p.epochs_per_update == 0 || p.minibatch_size == 0 || p.rollout_len == 0 {
            return Err(ConfigError::Invalid(
                "ppo.epochs_per_update, minibatch_size and rollout_len must be >= 1".into(),
            ));
        }
        if p.actor_hidden.is_empty() || p.critic_hidden.is_empty() {
            return Err(ConfigError::Invalid(
                "ppo.actor_hidden and critic_hidden need at least one layer".into(),
            ));
        }

        let b = &self.bo;
        if b.initial_design == 0 {
            return Err(ConfigError::Invalid(
                "bo.initial_design must be >= 1".into(),
            ));
        }
        if b.fitness_envs == 0 || b.fitness_steps == 0 {
            return Err(ConfigError::Invalid(
                "bo.fitness_envs and fitness_steps must be >= 1".into(),
            ));
        }

        if self.run.num_envs == 0 {
            return Err(ConfigError::Invalid("run.num_envs must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective config as a JSON value (for output metadata).
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialization cannot fail")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Policy-step duration in seconds.
    pub fn policy_dt(&self) -> f64 {
        self.sim.control_decimation as f64 / self.sim.pd_hz
    }
}
