//! The epoch loop: collect, estimate advantages, update, report.

use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::config::{Config, DrMode, RegMode};
use crate::morphology::ScalingFactors;
use crate::nn::{Activation, AdamState, GaussianPolicy, Mlp};
use crate::ppo::norm::RunningNorm;
use crate::ppo::rollout::collect_rollout;
use crate::ppo::update::{normalize_advantages, ppo_update};
use crate::ppo::{compute_gae, PpoError};
use crate::rng::{domain, stream};
use crate::sim::observation::{ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use crate::sim::population::Population;

/// One curves.csv row.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_return: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Wall-clock seconds for the epoch. Excluded from the byte-determinism
    /// contract (see the CLI docs).
    pub seconds: f64,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str =
        "epoch,mean_return,actor_loss,critic_loss,entropy,clip_frac,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch,
            self.mean_return,
            self.actor_loss,
            self.critic_loss,
            self.entropy,
            self.clip_fraction,
            self.seconds
        )
    }
}

/// Networks, normalizer and population wired together for a run.
pub struct TrainSetup {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    pub norm: RunningNorm,
    pub population: Population,
}

impl TrainSetup {
    /// Freshly initialized networks and a population for `dr_mode`.
    pub fn fresh(cfg: &Config, dr_mode: DrMode, seed: u64) -> Result<Self, PpoError> {
        let mut actor_sizes = vec![ACTOR_OBS_DIM];
        actor_sizes.extend_from_slice(&cfg.ppo.actor_hidden);
        actor_sizes.push(4);
        let mut critic_sizes = vec![CRITIC_OBS_DIM];
        critic_sizes.extend_from_slice(&cfg.ppo.critic_hidden);
        critic_sizes.push(1);

        let mut actor_rng = stream(seed, domain::ACTOR_INIT, 0);
        let policy = GaussianPolicy::new(
            Mlp::init(&actor_sizes, Activation::Tanh, &mut actor_rng),
            cfg.ppo.log_std_init,
        );
        let mut critic_rng = stream(seed, domain::CRITIC_INIT, 0);
        let critic = Mlp::init(&critic_sizes, Activation::Tanh, &mut critic_rng);
        let norm = RunningNorm::new(CRITIC_OBS_DIM);
        let population = Population::spawn(cfg, cfg.run.num_envs, dr_mode, seed, None)?;
        Ok(Self {
            policy,
            critic,
            norm,
            population,
        })
    }

    /// Freshly initialized networks with every env pinned to `xi`
    /// (training a specialist from scratch for one morphology).
    pub fn fresh_pinned(cfg: &Config, xi: ScalingFactors, seed: u64) -> Result<Self, PpoError> {
        let mut setup = Self::fresh(cfg, DrMode::None, seed)?;
        setup.population = Population::spawn(cfg, cfg.run.num_envs, DrMode::None, seed, Some(xi))?;
        Ok(setup)
    }

    /// Restore networks from a checkpoint and pin every env to `xi`
    /// (fine-tuning: spatial randomization off, classical episode-level
    /// randomization stays active inside the envs).
    pub fn from_checkpoint(
        cfg: &Config,
        ckpt: &Checkpoint,
        xi: ScalingFactors,
        seed: u64,
        n_envs: usize,
    ) -> Result<Self, PpoError> {
        ckpt.expect_dims(ACTOR_OBS_DIM, CRITIC_OBS_DIM)?;
        let (policy, critic, norm) = ckpt.instantiate()?;
        let population = Population::spawn(cfg, n_envs, DrMode::None, seed, Some(xi))?;
        Ok(Self {
            policy,
            critic,
            norm,
            population,
        })
    }
}

/// Final networks, the population (for rebuild-count inspection) and
/// per-epoch statistics.
pub struct TrainOutput {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    pub norm: RunningNorm,
    pub population: Population,
    pub stats: Vec<EpochStats>,
}

/// Run `epochs` training epochs on `setup`. `on_epoch` fires after each
/// epoch with the stats row and the live networks (for streaming CSV and
/// periodic checkpointing).
pub fn train(
    mut setup: TrainSetup,
    cfg: &Config,
    epochs: usize,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochStats, &GaussianPolicy, &Mlp, &RunningNorm),
) -> Result<TrainOutput, PpoError> {
    let gamma_eff = match cfg.ppo.reg_mode {
        RegMode::DReg => cfg.ppo.gamma_reg,
        RegMode::Normal | RegMode::AReg => cfg.ppo.gamma,
    };
    let mut actor_opt = AdamState::new(setup.policy.param_count(), cfg.ppo.actor_lr);
    let mut critic_opt = AdamState::new(setup.critic.params().len(), cfg.ppo.critic_lr);
    let mut shuffle_rng = stream(seed, domain::TRAIN, 0);

    let mut stats = Vec::with_capacity(epochs);
    let mut last_mean_return = 0.0;

    for epoch in 0..epochs {
        let t0 = Instant::now();
        if setup.population.dr_mode == DrMode::Temporal && epochs > 0 {
            setup
                .population
                .temporal_advance(epoch as f64 / epochs as f64)?;
        }

        let collected = collect_rollout(
            &setup.policy,
            &setup.critic,
            &mut setup.norm,
            &mut setup.population,
            cfg.ppo.rollout_len,
            true,
        )?;
        let (mut advantages, targets) = compute_gae(&collected.buffer, gamma_eff, cfg.ppo.lambda);
        normalize_advantages(&mut advantages);
        let update = ppo_update(
            &mut setup.policy,
            &mut setup.critic,
            &mut actor_opt,
            &mut critic_opt,
            &collected.buffer,
            &advantages,
            &targets,
            &cfg.ppo,
            &mut shuffle_rng,
        )?;

        if !collected.finished_returns.is_empty() {
            last_mean_return = collected.finished_returns.iter().sum::<f64>()
                / collected.finished_returns.len() as f64;
        }
        let row = EpochStats {
            epoch,
            mean_return: last_mean_return,
            actor_loss: update.actor_loss,
            critic_loss: update.critic_loss,
            entropy: update.entropy,
            clip_fraction: update.clip_fraction,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&row, &setup.policy, &setup.critic, &setup.norm);
        stats.push(row);
    }

    Ok(TrainOutput {
        policy: setup.policy,
        critic: setup.critic,
        norm: setup.norm,
        population: setup.population,
        stats,
    })
}

/// Fine-tune a pretrained checkpoint on one fixed morphology. The optimizer
/// state is reinitialized; `epochs = 0` returns the checkpoint's weights
/// unchanged.
pub fn finetune(
    cfg: &Config,
    ckpt: &Checkpoint,
    xi: ScalingFactors,
    epochs: usize,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochStats, &GaussianPolicy, &Mlp, &RunningNorm),
) -> Result<TrainOutput, PpoError> {
    let setup = TrainSetup::from_checkpoint(cfg, ckpt, xi, seed, cfg.run.num_envs)?;
    train(setup, cfg, epochs, seed, on_epoch)
}

/// Default fine-tuning budget: 10% of the pretraining epochs, at least 1.
pub fn default_finetune_epochs(pretrain_epochs: usize) -> usize {
    (pretrain_epochs.div_ceil(10)).max(1)
}
