//! Upper-level morphology search: fitness evaluation, GP surrogate with
//! expected-improvement proposals, the BO loop with embedded fine-tuning,
//! and the comparison protocols.

pub mod acquisition;
pub mod experiments;
pub mod fitness;
pub mod gp;
pub mod search;

pub use acquisition::{expected_improvement, propose};
pub use experiments::{
    dr_comparison, heatmap_eval, welch_t_test, DrReport, HeatmapReport, HeatmapSource, WelchTest,
};
pub use fitness::{evaluate_fitness, FitnessReport};
pub use gp::{gp_fit, GpSurrogate, HyperStrategy};
pub use search::{run_codesign, run_codesign_with, CandidateRecord, CodesignReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodesignError {
    #[error(transparent)]
    Gp(#[from] gp::GpError),
    #[error(transparent)]
    Ppo(#[from] crate::ppo::PpoError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
    #[error(transparent)]
    Morphology(#[from] crate::morphology::MorphologyError),
    #[error("invalid experiment data: {0}")]
    Data(String),
}
