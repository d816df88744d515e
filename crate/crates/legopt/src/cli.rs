//! The `legopt` command-line interface.
//!
//! Every command is reproducible from (config bytes, seed): the effective
//! config is echoed into every JSON output and checkpoint, and re-running
//! with it reproduces the run byte-for-byte. The only exceptions are the
//! documented wall-clock fields (`seconds` columns, `*seconds*` JSON keys),
//! which record real timings.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::checkpoint::{Checkpoint, CheckpointError, CheckpointMeta};
use crate::codesign::{
    dr_comparison, evaluate_fitness, heatmap_eval, run_codesign, CodesignError, HeatmapSource,
};
use crate::config::{Config, ConfigError, DrMode, RegMode, TaskKind};
use crate::morphology::{MorphologyError, ScalingFactors};
use crate::nn::{GaussianPolicy, Mlp};
use crate::ppo::norm::RunningNorm;
use crate::ppo::train::{default_finetune_epochs, finetune, train, EpochStats, TrainSetup};
use crate::ppo::PpoError;
use crate::rng::{derive_seed, domain};
use crate::sim::reward::RewardBreakdown;

pub const OUT_DIR_ENV: &str = "LEGOPT_OUT_DIR";
/// Gate for the equivalence verifier (max per-seed parameter deviation).
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "legopt",
    version,
    about = "Co-design of planar quadruped leg lengths and parkour policies"
)]
pub struct Cli {
    /// Path to the JSON config file (defaults apply when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Pre-train a morphology-general policy.
    Pretrain {
        /// Domain-randomization mode.
        #[arg(long, value_enum)]
        dr: Option<DrMode>,
        /// Critic regularization mode.
        #[arg(long, value_enum)]
        reg: Option<RegMode>,
        /// Training epochs; overrides ppo.total_epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint output path (default: <out_dir>/pretrain.checkpoint.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fine-tune a pretrained checkpoint on one morphology.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Four scale factors: front thigh, front shank, hind thigh, hind shank.
        #[arg(long, num_args = 4, value_names = ["FT", "FS", "HT", "HS"])]
        xi: Vec<f64>,
        /// Fine-tuning epochs (default: 10% of the checkpoint's pretraining epochs).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Bayesian-optimization morphology search with embedded fine-tuning.
    Codesign {
        /// Parkour task; overrides task.kind.
        #[arg(long, value_enum)]
        task: Option<TaskKind>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate fitness over the morphology grid.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Grid levels per factor (>= 2).
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Fine-tune the checkpoint for each cell before evaluating it.
        #[arg(long)]
        finetune_per_cell: bool,
    },
    /// Evaluate a checkpoint at one morphology.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, num_args = 4, value_names = ["FT", "FS", "HT", "HS"])]
        xi: Option<Vec<f64>>,
        /// Envs in the fitness average (default: bo.fitness_envs).
        #[arg(long)]
        envs: Option<usize>,
        /// Episode horizon (default: bo.fitness_steps).
        #[arg(long)]
        steps: Option<usize>,
        /// Write a per-step trace CSV of env 0 to this path
        /// (default <out_dir>/trace.csv when the flag is given bare).
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        trace: Option<PathBuf>,
    },
    /// Verify the discount-regularization equivalence theorem.
    VerifyEquivalence {
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long = "gamma-reg", default_value_t = 0.9)]
        gamma_reg: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Debug: run with the sign-flipped regularizer (negative control).
        #[arg(long, hide = true)]
        wrong_beta: bool,
    },
    /// Compare domain-randomization modes at equal budgets.
    DrCompare {
        /// Training epochs per run (default: ppo.total_epochs).
        #[arg(long)]
        budget: Option<usize>,
        /// Number of seeds per mode (>= 2).
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Evaluation morphologies per policy.
        #[arg(long, default_value_t = 100)]
        morphologies: usize,
        /// Envs per morphology evaluation.
        #[arg(long, default_value_t = 4)]
        eval_envs: usize,
    },
}

enum CliError {
    /// Bad input: config, flags, file paths, bounds. Exit 2.
    Usage(String),
    /// The run itself failed. Exit 1.
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MorphologyError> for CliError {
    fn from(e: MorphologyError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PpoError> for CliError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::Checkpoint(inner) => CliError::Usage(inner.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<CodesignError> for CliError {
    fn from(e: CodesignError) -> Self {
        match e {
            CodesignError::Checkpoint(inner) => CliError::Usage(inner.to_string()),
            CodesignError::Ppo(inner) => inner.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.run.out_dir = dir;
        }
    }
    Ok(cfg)
}

fn out_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn parse_xi(cfg: &Config, xi: &[f64]) -> Result<ScalingFactors, CliError> {
    let bounds = cfg.morphology.bounds()?;
    Ok(ScalingFactors::new([xi[0], xi[1], xi[2], xi[3]], &bounds)?)
}

fn meta_for(cfg: &Config, epochs: usize) -> CheckpointMeta {
    CheckpointMeta {
        epochs,
        seed: cfg.run.seed,
        reg_mode: cfg.ppo.reg_mode,
        dr_mode: cfg.run.dr_mode,
        config: cfg.echo(),
        config_hash: cfg.hash(),
    }
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Pretrain {
            dr,
            reg,
            epochs,
            out,
        } => {
            let mut cfg = load_config(&cli)?;
            if let Some(dr) = dr {
                cfg.run.dr_mode = *dr;
            }
            if let Some(reg) = reg {
                cfg.ppo.reg_mode = *reg;
            }
            if let Some(epochs) = epochs {
                cfg.ppo.total_epochs = *epochs;
            }
            cmd_pretrain(&cfg, out.as_deref())
        }
        Command::Finetune {
            checkpoint,
            xi,
            steps,
        } => {
            let cfg = load_config(&cli)?;
            cmd_finetune(&cfg, checkpoint, xi, *steps)
        }
        Command::Codesign { task, checkpoint } => {
            let mut cfg = load_config(&cli)?;
            if let Some(task) = task {
                cfg.task.kind = *task;
            }
            cmd_codesign(&cfg, checkpoint)
        }
        Command::Heatmap {
            checkpoint,
            levels,
            finetune_per_cell,
        } => {
            let cfg = load_config(&cli)?;
            cmd_heatmap(&cfg, checkpoint, *levels, *finetune_per_cell)
        }
        Command::Eval {
            checkpoint,
            xi,
            envs,
            steps,
            trace,
        } => {
            let cfg = load_config(&cli)?;
            cmd_eval(
                &cfg,
                checkpoint,
                xi.as_deref(),
                *envs,
                *steps,
                trace.as_deref(),
            )
        }
        Command::VerifyEquivalence {
            gamma,
            gamma_reg,
            steps,
            seeds,
            wrong_beta,
        } => cmd_verify_equivalence(*gamma, *gamma_reg, *steps, *seeds, *wrong_beta),
        Command::DrCompare {
            budget,
            seeds,
            morphologies,
            eval_envs,
        } => {
            let cfg = load_config(&cli)?;
            cmd_dr_compare(&cfg, *budget, *seeds, *morphologies, *eval_envs)
        }
    }
}

/// Streaming curves.csv writer plus periodic checkpointing.
struct EpochSink<'a> {
    csv: fs::File,
    checkpoint_path: &'a Path,
    checkpoint_every: usize,
    cfg: &'a Config,
}

impl EpochSink<'_> {
    fn handle(
        &mut self,
        row: &EpochStats,
        policy: &GaussianPolicy,
        critic: &Mlp,
        norm: &RunningNorm,
    ) {
        let _ = writeln!(self.csv, "{}", row.csv_row());
        if self.checkpoint_every > 0 && (row.epoch + 1) % self.checkpoint_every == 0 {
            let ckpt =
                Checkpoint::from_parts(policy, critic, norm, meta_for(self.cfg, row.epoch + 1));
            let _ = ckpt.save(self.checkpoint_path);
        }
        if row.epoch % 10 == 0 {
            eprintln!(
                "epoch {:>5}  return {:>10.3}  actor {:>9.4}  critic {:>9.4}  clip {:.3}",
                row.epoch, row.mean_return, row.actor_loss, row.critic_loss, row.clip_fraction
            );
        }
    }
}

fn cmd_pretrain(cfg: &Config, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let dir = out_dir(cfg)?;
    let ckpt_path = out
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.join("pretrain.checkpoint.json"));
    let curves_path = dir.join("curves.csv");

    let mut csv = fs::File::create(&curves_path)?;
    writeln!(csv, "{}", EpochStats::CSV_HEADER)?;
    let mut sink = EpochSink {
        csv,
        checkpoint_path: &ckpt_path,
        checkpoint_every: cfg.ppo.checkpoint_every,
        cfg,
    };

    let setup = TrainSetup::fresh(cfg, cfg.run.dr_mode, cfg.run.seed)?;
    let epochs = cfg.ppo.total_epochs;
    let out = train(setup, cfg, epochs, cfg.run.seed, &mut |row, p, c, n| {
        sink.handle(row, p, c, n)
    })?;

    let ckpt = Checkpoint::from_parts(&out.policy, &out.critic, &out.norm, meta_for(cfg, epochs));
    ckpt.save(&ckpt_path)?;
    println!("{}", ckpt_path.display());
    eprintln!("curves: {}", curves_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_finetune(
    cfg: &Config,
    checkpoint: &Path,
    xi: &[f64],
    steps: Option<usize>,
) -> Result<ExitCode, CliError> {
    let xi = parse_xi(cfg, xi)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let epochs = steps.unwrap_or_else(|| default_finetune_epochs(ckpt.meta.epochs));
    let dir = out_dir(cfg)?;

    let mut sink = |_: &EpochStats, _: &GaussianPolicy, _: &Mlp, _: &RunningNorm| {};
    let out = finetune(cfg, &ckpt, xi, epochs, cfg.run.seed, &mut sink)?;

    let mut meta = meta_for(cfg, ckpt.meta.epochs);
    meta.dr_mode = DrMode::None;
    let tuned = Checkpoint::from_parts(&out.policy, &out.critic, &out.norm, meta);
    let path = dir.join(format!("finetune_xi_{}.checkpoint.json", xi.label()));
    tuned.save(&path)?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_codesign(cfg: &Config, checkpoint: &Path) -> Result<ExitCode, CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dir = out_dir(cfg)?;
    let (best, report) = run_codesign(cfg, &ckpt, Some(&dir), cfg.run.seed)?;
    let path = dir.join("codesign_report.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("serializable"),
    )?;
    println!(
        "best xi = [{}], fitness = {}",
        best.xi
            .as_slice()
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
        best.fitness
    );
    eprintln!("report: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_heatmap(
    cfg: &Config,
    checkpoint: &Path,
    levels: usize,
    finetune_per_cell: bool,
) -> Result<ExitCode, CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dir = out_dir(cfg)?;
    let source = if finetune_per_cell {
        HeatmapSource::FineTunedPerCell {
            pretrained: &ckpt,
            epochs: cfg.bo.finetune_epochs,
        }
    } else {
        HeatmapSource::Fixed(&ckpt)
    };
    let report = heatmap_eval(
        cfg,
        source,
        levels,
        cfg.bo.fitness_envs,
        cfg.bo.fitness_steps,
        cfg.run.seed,
    )?;
    let csv_path = dir.join("heatmap.csv");
    fs::write(&csv_path, report.to_csv())?;
    let meta_path = dir.join("heatmap.meta.json");
    let meta = serde_json::json!({
        "levels": levels,
        "finetune_per_cell": finetune_per_cell,
        "checkpoint": checkpoint.display().to_string(),
        "config": cfg.echo(),
    });
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("serializable"),
    )?;
    println!("{}", csv_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(
    cfg: &Config,
    checkpoint: &Path,
    xi: Option<&[f64]>,
    envs: Option<usize>,
    steps: Option<usize>,
    trace: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let xi = match xi {
        Some(values) => parse_xi(cfg, values)?,
        None => ScalingFactors::DEFAULT,
    };
    let ckpt = Checkpoint::load(checkpoint)?;
    let n_envs = envs.unwrap_or(cfg.bo.fitness_envs);
    let horizon = steps.unwrap_or(cfg.bo.fitness_steps);

    let mut trace_rows = Vec::new();
    let want_trace = trace.is_some();
    let report = evaluate_fitness(
        cfg,
        &ckpt,
        xi,
        n_envs,
        horizon,
        derive_seed(cfg.run.seed, &[domain::EVAL, 0]),
        want_trace.then_some(&mut trace_rows),
    )?;

    if let Some(trace_path) = trace {
        let dir = out_dir(cfg)?;
        let path = if trace_path.as_os_str().is_empty() {
            dir.join("trace.csv")
        } else {
            trace_path.to_path_buf()
        };
        let mut text = format!(
            "step,body_x,body_z,pitch,q0,q1,q2,q3,{}\n",
            RewardBreakdown::CSV_HEADER
        );
        for row in &trace_rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.step,
                row.body_x,
                row.body_z,
                row.pitch,
                row.joints[0],
                row.joints[1],
                row.joints[2],
                row.joints[3],
                row.reward.csv_row()
            ));
        }
        fs::write(&path, text)?;
        eprintln!("trace: {}", path.display());
    }

    #[derive(serde::Serialize)]
    struct EvalDocument<'a> {
        #[serde(flatten)]
        report: &'a crate::codesign::FitnessReport,
        config: serde_json::Value,
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&EvalDocument {
            report: &report,
            config: cfg.echo()
        })
        .expect("serializable")
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify_equivalence(
    gamma: f64,
    gamma_reg: f64,
    steps: usize,
    seeds: usize,
    wrong_beta: bool,
) -> Result<ExitCode, CliError> {
    if !(0.0 < gamma_reg && gamma_reg < gamma && gamma < 1.0) {
        return Err(CliError::Usage(format!(
            "discounts must satisfy 0 < gamma_reg < gamma < 1 (got gamma_reg = {gamma_reg}, gamma = {gamma})"
        )));
    }
    let beta_override = wrong_beta.then(|| -crate::ppo::theorem_beta(gamma, gamma_reg));
    println!("seed  max |phi - omega|_inf over {steps} TD(0) steps");
    let mut worst: f64 = 0.0;
    for seed in 0..seeds as u64 {
        let dev =
            crate::ppo::equivalence_check(seed, steps, gamma, gamma_reg, &[16, 16], beta_override);
        worst = worst.max(dev);
        println!("{seed:>4}  {dev:.3e}");
    }
    println!("worst {worst:.3e}  (tolerance {EQUIVALENCE_TOLERANCE:.1e})");
    if worst <= EQUIVALENCE_TOLERANCE {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::Runtime(format!(
            "max deviation {worst:.3e} exceeds {EQUIVALENCE_TOLERANCE:.1e}"
        )))
    }
}

fn cmd_dr_compare(
    cfg: &Config,
    budget: Option<usize>,
    seeds: usize,
    morphologies: usize,
    eval_envs: usize,
) -> Result<ExitCode, CliError> {
    if seeds < 2 {
        return Err(CliError::Usage(format!(
            "dr-compare needs at least 2 seeds per mode, got {seeds}"
        )));
    }
    let budget = budget.unwrap_or(cfg.ppo.total_epochs);
    let seed_list: Vec<u64> = (0..seeds as u64)
        .map(|i| derive_seed(cfg.run.seed, &[domain::TRAIN, i]))
        .collect();
    let report = dr_comparison(cfg, budget, &seed_list, morphologies, eval_envs)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("dr_report.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("serializable"),
    )?;
    println!(
        "spatial {:.3} +- {:.3} | temporal {:.3} +- {:.3} (rebuilds {:?}) | no-dr {:.3} +- {:.3}",
        report.spatial.mean,
        report.spatial.std,
        report.temporal.mean,
        report.temporal.std,
        report.temporal.rebuilds,
        report.no_dr.mean,
        report.no_dr.std
    );
    println!(
        "welch p: spatial vs temporal {:.3e}, spatial vs no-dr {:.3e}",
        report.p_spatial_vs_temporal.p_value, report.p_spatial_vs_no_dr.p_value
    );
    eprintln!("report: {}", path.display());
    Ok(ExitCode::SUCCESS)
}
