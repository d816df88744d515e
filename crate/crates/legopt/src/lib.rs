//! Co-design of a planar quadruped's leg-segment lengths and its parkour
//! control policy.
//!
//! The pipeline has two phases. Pre-training produces a morphology-general
//! policy: a population of robots with randomized leg-segment scale factors
//! (spatial domain randomization) is trained with PPO under an asymmetric
//! actor-critic and a regularized discount factor. Morphology search then
//! runs Bayesian optimization over the scale-factor box, fine-tuning the
//! pretrained policy for each candidate and scoring it by mean non-discounted
//! episode return.
//!
//! Modules map onto the pipeline: [`morphology`] scales the robot
//! description, [`sim`] is the planar rigid-body simulation with reward and
//! observation construction, [`nn`] the dense-network substrate, [`ppo`] the
//! trainer (with the discount-regularization equivalence verifier), and
//! [`codesign`] the upper-level search and experiment protocols. The `legopt`
//! binary exposes everything as subcommands.

pub mod checkpoint;
pub mod cli;
pub mod codesign;
pub mod config;
pub mod morphology;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod sim;
