//! Experiment protocols: the domain-randomization comparison (per-mode means
//! over random morphologies with Welch t-tests) and the morphology-grid
//! heatmap.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::codesign::fitness::evaluate_fitness;
use crate::codesign::CodesignError;
use crate::config::{Config, DrMode};
use crate::morphology::{morphology_grid, sample_factors, ScalingFactors};
use crate::ppo::train::{train, TrainSetup};
use crate::rng::{derive_seed, domain, stream};

/// Welch's unequal-variance t-test (two-sided).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchTest {
    assert!(
        a.len() >= 2 && b.len() >= 2,
        "need at least 2 samples per side"
    );
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / (nb - 1.0);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        // Degenerate: both samples constant.
        let p = if ma == mb { 1.0 } else { 0.0 };
        return WelchTest {
            t: if ma == mb { 0.0 } else { f64::INFINITY },
            df: f64::NAN,
            p_value: p,
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    WelchTest { t, df, p_value }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrModeReport {
    /// Mean over seeds of (mean fitness over the evaluation morphologies).
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
    /// Wall-clock seconds per seed (excluded from byte determinism).
    pub wall_clock_seconds: Vec<f64>,
    /// Morphology switches performed (temporal mode).
    pub rebuilds: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrReport {
    pub budget_epochs: usize,
    pub seeds: Vec<u64>,
    pub eval_morphologies: usize,
    pub spatial: DrModeReport,
    pub temporal: DrModeReport,
    pub no_dr: DrModeReport,
    pub p_spatial_vs_temporal: WelchTest,
    pub p_spatial_vs_no_dr: WelchTest,
    pub config: serde_json::Value,
}

fn in_memory_checkpoint(
    cfg: &Config,
    out: &crate::ppo::train::TrainOutput,
    seed: u64,
    dr_mode: DrMode,
    epochs: usize,
) -> Checkpoint {
    Checkpoint::from_parts(
        &out.policy,
        &out.critic,
        &out.norm,
        CheckpointMeta {
            epochs,
            seed,
            reg_mode: cfg.ppo.reg_mode,
            dr_mode,
            config: cfg.echo(),
            config_hash: cfg.hash(),
        },
    )
}

/// Mean fitness of `checkpoint` over a fixed list of morphologies.
pub fn eval_over_morphologies(
    cfg: &Config,
    checkpoint: &Checkpoint,
    morphologies: &[ScalingFactors],
    n_envs: usize,
    steps: usize,
    eval_seed: u64,
) -> Result<Vec<f64>, CodesignError> {
    morphologies
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let seed = derive_seed(eval_seed, &[domain::EVAL, i as u64]);
            Ok(evaluate_fitness(cfg, checkpoint, *xi, n_envs, steps, seed, None)?.fitness)
        })
        .collect()
}

/// Train spatial/temporal/no-DR policies at equal budgets across `seeds` and
/// compare their mean returns over `eval_morphologies` random morphologies.
pub fn dr_comparison(
    cfg: &Config,
    budget_epochs: usize,
    seeds: &[u64],
    eval_morphologies: usize,
    eval_envs: usize,
) -> Result<DrReport, CodesignError> {
    if seeds.len() < 2 {
        return Err(CodesignError::Data(format!(
            "dr comparison needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let bounds = cfg.morphology.bounds()?;
    // One fixed evaluation set shared by every mode and seed.
    let mut eval_rng = stream(cfg.run.seed, domain::EVAL, u64::MAX);
    let morphologies: Vec<ScalingFactors> = (0..eval_morphologies)
        .map(|_| sample_factors(&mut eval_rng, &bounds))
        .collect();
    let eval_steps = cfg.task.episode_len;

    let run_mode = |dr_mode: DrMode| -> Result<DrModeReport, CodesignError> {
        let mut per_seed = Vec::with_capacity(seeds.len());
        let mut wall_clocks = Vec::with_capacity(seeds.len());
        let mut rebuilds = None;
        let mut sink = |_: &crate::ppo::EpochStats,
                        _: &crate::nn::GaussianPolicy,
                        _: &crate::nn::Mlp,
                        _: &crate::ppo::norm::RunningNorm| {};
        for &seed in seeds {
            let t0 = Instant::now();
            let setup = TrainSetup::fresh(cfg, dr_mode, seed)?;
            let out = train(setup, cfg, budget_epochs, seed, &mut sink)?;
            wall_clocks.push(t0.elapsed().as_secs_f64());
            if dr_mode == DrMode::Temporal {
                rebuilds = Some(out.population.rebuild_count());
            }
            let ckpt = in_memory_checkpoint(cfg, &out, seed, dr_mode, budget_epochs);
            let scores = eval_over_morphologies(
                cfg,
                &ckpt,
                &morphologies,
                eval_envs,
                eval_steps,
                cfg.run.seed,
            )?;
            per_seed.push(scores.iter().sum::<f64>() / scores.len() as f64);
        }
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = (per_seed
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt();
        Ok(DrModeReport {
            mean,
            std,
            per_seed,
            wall_clock_seconds: wall_clocks,
            rebuilds,
        })
    };

    let spatial = run_mode(DrMode::Spatial)?;
    let temporal = run_mode(DrMode::Temporal)?;
    let no_dr = run_mode(DrMode::None)?;
    let p_spatial_vs_temporal = welch_t_test(&spatial.per_seed, &temporal.per_seed);
    let p_spatial_vs_no_dr = welch_t_test(&spatial.per_seed, &no_dr.per_seed);

    Ok(DrReport {
        budget_epochs,
        seeds: seeds.to_vec(),
        eval_morphologies,
        spatial,
        temporal,
        no_dr,
        p_spatial_vs_temporal,
        p_spatial_vs_no_dr,
        config: cfg.echo(),
    })
}

/// Where heatmap cell policies come from.
pub enum HeatmapSource<'a> {
    /// Evaluate one fixed checkpoint everywhere.
    Fixed(&'a Checkpoint),
    /// Fine-tune the pretrained checkpoint for each cell first.
    FineTunedPerCell {
        pretrained: &'a Checkpoint,
        epochs: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub xi: ScalingFactors,
    pub fitness: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapReport {
    pub levels: usize,
    pub cells: Vec<HeatmapCell>,
}

impl HeatmapReport {
    /// Long-format CSV: header of xi labels plus one row per grid cell in
    /// lexicographic grid order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi0,xi1,xi2,xi3,fitness,valid\n");
        for cell in &self.cells {
            let xi = cell.xi.as_slice();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                xi[0], xi[1], xi[2], xi[3], cell.fitness, cell.valid
            ));
        }
        out
    }
}

/// Evaluate fitness over the `levels`^4 morphology grid.
pub fn heatmap_eval(
    cfg: &Config,
    source: HeatmapSource<'_>,
    levels: usize,
    n_envs: usize,
    steps: usize,
    seed: u64,
) -> Result<HeatmapReport, CodesignError> {
    let bounds = cfg.morphology.bounds()?;
    let grid = morphology_grid(levels, &bounds)?;
    let mut sink = |_: &crate::ppo::EpochStats,
                    _: &crate::nn::GaussianPolicy,
                    _: &crate::nn::Mlp,
                    _: &crate::ppo::norm::RunningNorm| {};

    let mut cells = Vec::with_capacity(grid.len());
    for (i, xi) in grid.into_iter().enumerate() {
        let eval_seed = derive_seed(seed, &[domain::EVAL, i as u64]);
        let result: Result<f64, CodesignError> = (|| {
            let fitness = match &source {
                HeatmapSource::Fixed(ckpt) => {
                    evaluate_fitness(cfg, ckpt, xi, n_envs, steps, eval_seed, None)?.fitness
                }
                HeatmapSource::FineTunedPerCell { pretrained, epochs } => {
                    let ft_seed = derive_seed(seed, &[domain::BO, i as u64]);
                    let out = crate::ppo::train::finetune(
                        cfg, pretrained, xi, *epochs, ft_seed, &mut sink,
                    )?;
                    let ckpt = in_memory_checkpoint(
                        cfg,
                        &out,
                        ft_seed,
                        DrMode::None,
                        pretrained.meta.epochs,
                    );
                    evaluate_fitness(cfg, &ckpt, xi, n_envs, steps, eval_seed, None)?.fitness
                }
            };
            Ok(fitness)
        })();
        match result {
            Ok(fitness) if fitness.is_finite() => cells.push(HeatmapCell {
                xi,
                fitness,
                valid: true,
            }),
            _ => cells.push(HeatmapCell {
                xi,
                fitness: f64::NAN,
                valid: false,
            }),
        }
    }
    Ok(HeatmapReport { levels, cells })
}
