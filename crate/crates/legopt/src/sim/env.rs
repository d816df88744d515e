//! One simulated robot episode: PD inner loop, termination, reward and
//! observation assembly.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::SimConfig;
use crate::morphology::{MorphologyError, RobotModel};
use crate::rng::env_stream;
use crate::sim::dynamics::{self, pd_torque, physics_step, DynState, DOF, NUM_FEET, NUM_JOINTS};
use crate::sim::observation::{
    heights_ahead, privileged_block, proprio_frame, Observation, ProprioHistory, PROPRIO_DIM,
};
use crate::sim::reward::{compute_reward, RewardBreakdown, RewardInputs};
use crate::sim::terrain::{TaskError, TaskSpec, Terrain};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step() called on a finished episode; reset the env first")]
    EpisodeFinished,
    #[error("temporal_advance() called on a non-temporal population")]
    NotTemporal,
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
}

/// Mutable episode state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub dynamics: DynState,
    pub joint_accels: [f64; NUM_JOINTS],
    pub torques: [f64; NUM_JOINTS],
    pub prev_torques: [f64; NUM_JOINTS],
    pub prev_action: [f64; NUM_JOINTS],
    pub foot_contacts: [bool; NUM_FEET],
    pub foot_positions: [[f64; 2]; NUM_FEET],
    pub waypoint_index: usize,
    pub step_count: usize,
}

impl EnvState {
    pub fn body_pos(&self) -> [f64; 2] {
        [self.dynamics.q[0], self.dynamics.q[1]]
    }

    pub fn body_vel(&self) -> [f64; 2] {
        [self.dynamics.qd[0], self.dynamics.qd[1]]
    }

    pub fn pitch(&self) -> f64 {
        self.dynamics.q[2]
    }

    pub fn pitch_rate(&self) -> f64 {
        self.dynamics.qd[2]
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
}

/// A single robot in a single terrain. Owns its RNG stream; never step one
/// env from two threads.
pub struct Env {
    pub model: RobotModel,
    pub state: EnvState,
    task: Arc<TaskSpec>,
    terrain: Arc<Terrain>,
    sim: Arc<SimConfig>,
    master_seed: u64,
    env_index: u64,
    reset_count: u64,
    rng: ChaCha8Rng,
    pub friction: f64,
    pub motor_strength: f64,
    history: ProprioHistory,
    last_proprio: [f64; PROPRIO_DIM],
    pub done: bool,
    pub diverged: bool,
    pub episode_return: f64,
}

impl Env {
    pub fn new(
        model: RobotModel,
        task: Arc<TaskSpec>,
        terrain: Arc<Terrain>,
        sim: Arc<SimConfig>,
        master_seed: u64,
        env_index: u64,
    ) -> Self {
        let mut env = Self {
            model,
            state: EnvState {
                dynamics: DynState {
                    q: [0.0; DOF],
                    qd: [0.0; DOF],
                },
                joint_accels: [0.0; NUM_JOINTS],
                torques: [0.0; NUM_JOINTS],
                prev_torques: [0.0; NUM_JOINTS],
                prev_action: [0.0; NUM_JOINTS],
                foot_contacts: [false; NUM_FEET],
                foot_positions: [[0.0; 2]; NUM_FEET],
                waypoint_index: 0,
                step_count: 0,
            },
            task,
            terrain,
            sim,
            master_seed,
            env_index,
            reset_count: 0,
            rng: env_stream(master_seed, env_index, 0),
            friction: 1.0,
            motor_strength: 1.0,
            history: ProprioHistory::filled_with([0.0; PROPRIO_DIM]),
            last_proprio: [0.0; PROPRIO_DIM],
            done: true,
            diverged: false,
            episode_return: 0.0,
        };
        let _ = env.reset();
        env
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn env_index(&self) -> u64 {
        self.env_index
    }

    /// The env's own random stream (action noise during rollouts).
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Replace the robot (morphology switch); the episode restarts.
    pub fn set_model(&mut self, model: RobotModel) -> Observation {
        self.model = model;
        self.reset()
    }

    /// Start a fresh episode. Deterministic given (master seed, env index,
    /// reset counter): the per-episode stream is re-derived on every reset.
    pub fn reset(&mut self) -> Observation {
        self.reset_count += 1;
        self.rng = env_stream(self.master_seed, self.env_index, self.reset_count);

        // Draw order is fixed: 4 joint noises, pitch noise, friction, motor.
        let noise = self.sim.reset_noise;
        let joints: [f64; NUM_JOINTS] = core::array::from_fn(|j| {
            self.model.nominal_pose[j] + self.rng.random_range(-noise.joint..=noise.joint)
        });
        let pitch = self.rng.random_range(-noise.pitch..=noise.pitch);
        self.friction = self
            .rng
            .random_range(self.sim.friction_range[0]..=self.sim.friction_range[1]);
        self.motor_strength = self
            .rng
            .random_range(self.sim.motor_strength_range[0]..=self.sim.motor_strength_range[1]);

        let x = 0.0;
        let z = dynamics::resting_height(&self.model, &self.terrain, x, pitch, &joints, 0.001);
        self.state = EnvState {
            dynamics: DynState {
                q: [x, z, pitch, joints[0], joints[1], joints[2], joints[3]],
                qd: [0.0; DOF],
            },
            joint_accels: [0.0; NUM_JOINTS],
            torques: [0.0; NUM_JOINTS],
            prev_torques: [0.0; NUM_JOINTS],
            prev_action: [0.0; NUM_JOINTS],
            foot_contacts: [false; NUM_FEET],
            foot_positions: core::array::from_fn(|leg| {
                dynamics::foot_position(
                    &self.model,
                    &[x, z, pitch, joints[0], joints[1], joints[2], joints[3]],
                    leg,
                )
            }),
            waypoint_index: 0,
            step_count: 0,
        };
        self.done = false;
        self.diverged = false;
        self.episode_return = 0.0;

        let frame = self.current_proprio();
        self.history = ProprioHistory::filled_with(frame);
        self.last_proprio = frame;
        self.build_observation()
    }

    fn current_proprio(&self) -> [f64; PROPRIO_DIM] {
        proprio_frame(
            self.state.pitch(),
            self.state.pitch_rate(),
            &self.state.dynamics.joint_angles(),
            &self.state.dynamics.joint_velocities(),
            &self.state.prev_action,
            self.state.foot_contacts,
        )
    }

    /// The full observation for the current state.
    pub fn build_observation(&self) -> Observation {
        let proprio = self.current_proprio();
        let extero = heights_ahead(
            self.state.dynamics.q[0],
            self.state.dynamics.q[1],
            self.model.stand_height,
            &self.terrain,
        );
        let history = self.history.flatten();
        let explicit = [self.state.dynamics.qd[0], self.state.dynamics.qd[1]];
        let privileged = privileged_block(&self.model, self.friction, self.motor_strength);
        Observation::from_parts(&proprio, &extero, &history, &explicit, &privileged)
    }

    /// Map a policy action to PD target angles.
    pub fn action_targets(&self, action: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
        core::array::from_fn(|j| {
            let [lo, hi] = self.model.joint_limits(j);
            (self.model.nominal_pose[j] + self.sim.action_scale * action[j]).clamp(lo, hi)
        })
    }

    /// Advance one policy step (`control_decimation` PD ticks).
    pub fn step(&mut self, action: &[f64; NUM_JOINTS]) -> Result<StepOutput, SimError> {
        if self.done {
            return Err(SimError::EpisodeFinished);
        }

        let q_des = self.action_targets(action);
        let pd_dt = 1.0 / self.sim.pd_hz;
        let prev_step_torques = self.state.torques;

        for _ in 0..self.sim.control_decimation {
            let qd_before = self.state.dynamics.joint_velocities();
            let tau = pd_torque(
                &self.model.pd,
                &q_des,
                &self.state.dynamics.joint_angles(),
                &qd_before,
                self.motor_strength,
                self.sim.tau_max,
            );
            let info = physics_step(
                &self.model,
                &mut self.state.dynamics,
                &tau,
                &self.sim,
                Some(&self.terrain),
                self.friction,
            );
            self.state.torques = tau;
            self.state.foot_contacts = info.foot_contacts;
            self.state.foot_positions = info.foot_positions;
            if info.diverged {
                self.diverged = true;
                break;
            }
            let qd_after = self.state.dynamics.joint_velocities();
            self.state.joint_accels =
                core::array::from_fn(|j| (qd_after[j] - qd_before[j]) / pd_dt);
            if info.body_contact {
                // Trunk touched the ground: terminal; keep the tick's state.
                self.done = true;
            }
        }

        self.state.step_count += 1;

        // Waypoint progression: capture radius or passing the waypoint's x.
        while self.state.waypoint_index + 1 < self.task.waypoints.len() {
            let wp = self.task.waypoints[self.state.waypoint_index];
            let d = dist2(self.state.body_pos(), wp);
            if d < self.sim.capture_radius || self.state.dynamics.q[0] >= wp[0] {
                self.state.waypoint_index += 1;
            } else {
                break;
            }
        }

        // Termination.
        let pitch = self.state.pitch();
        if self.diverged
            || pitch.abs() > self.sim.pitch_limit
            || self.state.dynamics.q[1] < self.sim.fall_z
            || self.state.step_count >= self.task.episode_len
        {
            self.done = true;
        }

        let reward = if self.diverged {
            RewardBreakdown::default()
        } else {
            let inputs = RewardInputs {
                body_pos: self.state.body_pos(),
                body_vel: self.state.body_vel(),
                pitch,
                pitch_rate: self.state.pitch_rate(),
                waypoint: self.task.waypoints[self.state.waypoint_index],
                v_cmd: self.task.v_cmd,
                action,
                prev_action: &self.state.prev_action,
                joint_angles: &self.state.dynamics.joint_angles(),
                joint_accels: &self.state.joint_accels,
                nominal_pose: &self.model.nominal_pose,
                torques: &self.state.torques,
                prev_torques: &prev_step_torques,
                foot_contacts: self.state.foot_contacts,
                foot_positions: self.state.foot_positions,
            };
            compute_reward(&inputs, &self.terrain, &self.sim.reward_weights)
        };
        self.episode_return += reward.total;

        self.state.prev_action = *action;
        self.state.prev_torques = self.state.torques;

        let frame = self.current_proprio();
        self.history.push(self.last_proprio);
        self.last_proprio = frame;

        Ok(StepOutput {
            observation: self.build_observation(),
            reward,
            done: self.done,
        })
    }

    /// Whether the body has passed the task's obstacle.
    pub fn obstacle_crossed(&self) -> bool {
        self.state.dynamics.q[0] > self.task.obstacle_end()
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dz = a[1] - b[1];
    (dx * dx + dz * dz).sqrt()
}
