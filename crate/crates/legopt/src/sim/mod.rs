//! Deterministic planar rigid-body simulation of the quadruped on parkour
//! terrains: PD inner loop, observation construction, reward evaluation and
//! population management for the domain-randomization modes.

pub mod dynamics;
pub mod env;
pub mod observation;
pub mod population;
pub mod reward;
pub mod terrain;

pub use dynamics::{pd_torque, physics_step, DynState};
pub use env::{Env, EnvState, SimError, StepOutput};
pub use observation::{Observation, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
pub use population::{PopStepOutput, Population};
pub use reward::{compute_reward, RewardBreakdown};
pub use terrain::{make_terrain, TaskSpec, Terrain};
