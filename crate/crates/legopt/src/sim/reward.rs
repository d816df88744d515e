//! Reward terms for the parkour tasks.
//!
//! Raw term values are stored per element; the total is the weighted sum.
//! Planar adaptations: yaw tracking and hip abduction have no sagittal-plane
//! counterpart (the yaw weight stays in the config schema but is unused),
//! the xy angular-velocity penalty becomes pitch-rate squared, and the
//! orientation penalty g^2 becomes sin^2(pitch).

use serde::{Deserialize, Serialize};

use crate::config::RewardWeights;
use crate::sim::terrain::Terrain;

/// Feet count as "on an edge" within this horizontal distance of a height
/// change (m).
pub const EDGE_MARGIN: f64 = 0.05;

/// One value per reward element plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub goal_tracking: f64,
    pub clearance: f64,
    pub lin_vel_z: f64,
    pub pitch_rate: f64,
    pub action_rate: f64,
    pub joint_accel: f64,
    pub joint_cosmetic: f64,
    pub torque_change: f64,
    pub torque_penalty: f64,
    pub orientation: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn weighted_total(&self, w: &RewardWeights) -> f64 {
        w.goal_tracking * self.goal_tracking
            + w.clearance * self.clearance
            + w.lin_vel_z * self.lin_vel_z
            + w.pitch_rate * self.pitch_rate
            + w.action_rate * self.action_rate
            + w.joint_accel * self.joint_accel
            + w.joint_cosmetic * self.joint_cosmetic
            + w.torque_change * self.torque_change
            + w.torque_penalty * self.torque_penalty
            + w.orientation * self.orientation
    }

    pub const CSV_HEADER: &'static str = "goal_tracking,clearance,lin_vel_z,pitch_rate,\
action_rate,joint_accel,joint_cosmetic,torque_change,torque_penalty,orientation,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.goal_tracking,
            self.clearance,
            self.lin_vel_z,
            self.pitch_rate,
            self.action_rate,
            self.joint_accel,
            self.joint_cosmetic,
            self.torque_change,
            self.torque_penalty,
            self.orientation,
            self.total
        )
    }
}

/// Everything the evaluator needs about the instantaneous state.
pub struct RewardInputs<'a> {
    /// Body position (x, z).
    pub body_pos: [f64; 2],
    /// Body linear velocity (vx, vz).
    pub body_vel: [f64; 2],
    pub pitch: f64,
    pub pitch_rate: f64,
    /// Current waypoint p.
    pub waypoint: [f64; 2],
    pub v_cmd: f64,
    pub action: &'a [f64; 4],
    pub prev_action: &'a [f64; 4],
    pub joint_angles: &'a [f64; 4],
    pub joint_accels: &'a [f64; 4],
    pub nominal_pose: &'a [f64; 4],
    pub torques: &'a [f64; 4],
    pub prev_torques: &'a [f64; 4],
    pub foot_contacts: [bool; 2],
    pub foot_positions: [[f64; 2]; 2],
}

/// Evaluate all reward elements. The clearance term is stored non-negative
/// (count of contact feet on edges) and receives its negative weight in the
/// total.
pub fn compute_reward(
    inputs: &RewardInputs<'_>,
    terrain: &Terrain,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let mut r = RewardBreakdown::default();

    // Goal tracking: min(<v, d_hat>, v_cmd) toward the waypoint; contributes
    // zero when standing exactly on the waypoint.
    let dx = inputs.waypoint[0] - inputs.body_pos[0];
    let dz = inputs.waypoint[1] - inputs.body_pos[1];
    let dist = (dx * dx + dz * dz).sqrt();
    r.goal_tracking = if dist > 0.0 {
        let toward = (inputs.body_vel[0] * dx + inputs.body_vel[1] * dz) / dist;
        toward.min(inputs.v_cmd)
    } else {
        0.0
    };

    // Clearance: feet in contact within EDGE_MARGIN of a terrain edge.
    for (contact, pos) in inputs.foot_contacts.iter().zip(inputs.foot_positions) {
        if *contact && terrain.nearest_edge_distance(pos[0]) <= EDGE_MARGIN {
            r.clearance += 1.0;
        }
    }

    r.lin_vel_z = inputs.body_vel[1] * inputs.body_vel[1];
    r.pitch_rate = inputs.pitch_rate * inputs.pitch_rate;

    r.action_rate = inputs
        .action
        .iter()
        .zip(inputs.prev_action)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        .sqrt();

    r.joint_accel = inputs.joint_accels.iter().map(|a| a * a).sum();
    r.joint_cosmetic = inputs
        .joint_angles
        .iter()
        .zip(inputs.nominal_pose)
        .map(|(q, n)| (q - n) * (q - n))
        .sum();
    r.torque_change = inputs
        .torques
        .iter()
        .zip(inputs.prev_torques)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    r.torque_penalty = inputs.torques.iter().map(|t| t * t).sum();

    let s = inputs.pitch.sin();
    r.orientation = s * s;

    r.total = r.weighted_total(weights);
    r
}
