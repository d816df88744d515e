//! Layered observations for the asymmetric actor-critic.
//!
//! Layout (actor sees the first three blocks, the critic sees all five):
//!
//! | block                | dims | contents                                            |
//! |----------------------|------|-----------------------------------------------------|
//! | proprio `x_t`        | 16   | pitch, pitch rate, q (4), qd (4), prev action (4), foot contacts (2) |
//! | extero `m_t`         | 11   | heights at x + {0.0..1.0} m relative to body height |
//! | history `h_t`        | 80   | previous 5 proprio frames, oldest first             |
//! | explicit priv `e'_t` | 2    | body linear velocity (vx, vz)                       |
//! | privileged `e_t`     | 8    | total mass, CoM x-offset, xi (4), friction, motor strength |

use crate::morphology::RobotModel;
use crate::sim::terrain::Terrain;

pub const PROPRIO_DIM: usize = 16;
pub const EXTERO_DIM: usize = 11;
pub const HISTORY_FRAMES: usize = 5;
pub const HISTORY_DIM: usize = HISTORY_FRAMES * PROPRIO_DIM;
pub const EXPLICIT_PRIV_DIM: usize = 2;
pub const PRIV_DIM: usize = 8;

/// Actor input: proprio + extero + history.
pub const ACTOR_OBS_DIM: usize = PROPRIO_DIM + EXTERO_DIM + HISTORY_DIM;
/// Critic input: actor input + explicit privileged + privileged.
pub const CRITIC_OBS_DIM: usize = ACTOR_OBS_DIM + EXPLICIT_PRIV_DIM + PRIV_DIM;

/// Horizontal spacing of the height sampling points (m).
pub const EXTERO_SPACING: f64 = 0.1;
/// Height samples are clipped to this band (m).
pub const EXTERO_CLIP: f64 = 1.0;

/// One full observation, stored as the critic layout; the actor view is the
/// leading `ACTOR_OBS_DIM` prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    data: [f64; CRITIC_OBS_DIM],
}

impl Observation {
    pub fn from_parts(
        proprio: &[f64; PROPRIO_DIM],
        extero: &[f64; EXTERO_DIM],
        history: &[f64; HISTORY_DIM],
        explicit_priv: &[f64; EXPLICIT_PRIV_DIM],
        privileged: &[f64; PRIV_DIM],
    ) -> Self {
        let mut data = [0.0; CRITIC_OBS_DIM];
        let mut at = 0;
        for block in [
            &proprio[..],
            &extero[..],
            &history[..],
            &explicit_priv[..],
            &privileged[..],
        ] {
            data[at..at + block.len()].copy_from_slice(block);
            at += block.len();
        }
        Self { data }
    }

    pub fn actor(&self) -> &[f64] {
        &self.data[..ACTOR_OBS_DIM]
    }

    pub fn critic(&self) -> &[f64] {
        &self.data
    }

    pub fn proprio(&self) -> &[f64] {
        &self.data[..PROPRIO_DIM]
    }

    pub fn extero(&self) -> &[f64] {
        &self.data[PROPRIO_DIM..PROPRIO_DIM + EXTERO_DIM]
    }

    pub fn history(&self) -> &[f64] {
        &self.data[PROPRIO_DIM + EXTERO_DIM..ACTOR_OBS_DIM]
    }

    pub fn explicit_privileged(&self) -> &[f64] {
        &self.data[ACTOR_OBS_DIM..ACTOR_OBS_DIM + EXPLICIT_PRIV_DIM]
    }

    pub fn privileged(&self) -> &[f64] {
        &self.data[ACTOR_OBS_DIM + EXPLICIT_PRIV_DIM..]
    }
}

/// Assemble one proprio frame.
pub fn proprio_frame(
    pitch: f64,
    pitch_rate: f64,
    joint_angles: &[f64; 4],
    joint_velocities: &[f64; 4],
    prev_action: &[f64; 4],
    foot_contacts: [bool; 2],
) -> [f64; PROPRIO_DIM] {
    let mut f = [0.0; PROPRIO_DIM];
    f[0] = pitch;
    f[1] = pitch_rate;
    f[2..6].copy_from_slice(joint_angles);
    f[6..10].copy_from_slice(joint_velocities);
    f[10..14].copy_from_slice(prev_action);
    f[14] = foot_contacts[0] as u8 as f64;
    f[15] = foot_contacts[1] as u8 as f64;
    f
}

/// Height samples ahead of the body, relative to the body's reference height
/// (body z minus the model's nominal stand height), clipped to +-1 m.
pub fn heights_ahead(
    body_x: f64,
    body_z: f64,
    stand_height: f64,
    terrain: &Terrain,
) -> [f64; EXTERO_DIM] {
    let z_ref = body_z - stand_height;
    core::array::from_fn(|k| {
        let x = body_x + EXTERO_SPACING * k as f64;
        (terrain.height(x) - z_ref).clamp(-EXTERO_CLIP, EXTERO_CLIP)
    })
}

/// FIFO of the last `HISTORY_FRAMES` proprio frames, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ProprioHistory {
    frames: [[f64; PROPRIO_DIM]; HISTORY_FRAMES],
}

impl ProprioHistory {
    /// At reset the history is the initial frame repeated.
    pub fn filled_with(frame: [f64; PROPRIO_DIM]) -> Self {
        Self {
            frames: [frame; HISTORY_FRAMES],
        }
    }

    /// Shift out the oldest frame and append `frame`.
    pub fn push(&mut self, frame: [f64; PROPRIO_DIM]) {
        self.frames.rotate_left(1);
        self.frames[HISTORY_FRAMES - 1] = frame;
    }

    pub fn flatten(&self) -> [f64; HISTORY_DIM] {
        let mut out = [0.0; HISTORY_DIM];
        for (i, frame) in self.frames.iter().enumerate() {
            out[i * PROPRIO_DIM..(i + 1) * PROPRIO_DIM].copy_from_slice(frame);
        }
        out
    }
}

/// Privileged block for a model and its episode constants.
pub fn privileged_block(model: &RobotModel, friction: f64, motor_strength: f64) -> [f64; PRIV_DIM] {
    let xi = model.xi.as_slice();
    [
        model.total_mass,
        model.com_x_offset,
        xi[0],
        xi[1],
        xi[2],
        xi[3],
        friction,
        motor_strength,
    ]
}
