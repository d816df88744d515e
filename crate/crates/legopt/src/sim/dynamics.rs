//! Planar articulated rigid-body dynamics of the quadruped.
//!
//! Generalized coordinates (7): body x, body z, pitch, front hip, front knee,
//! hind hip, hind knee. Joint angles are relative; a segment at angle 0
//! hangs straight down. Pitch is positive counterclockwise in the x-z plane
//! (nose up).
//!
//! Each PD tick integrates `substeps` semi-implicit Euler steps of the full
//! Lagrangian dynamics: the mass matrix is assembled from per-body CoM
//! Jacobians, velocity-product and gravity terms come from an inverse-dynamics
//! pass with zero acceleration, and foot-terrain contact enters as penalty
//! forces (spring-damper normal, damped Coulomb friction tangentially) mapped
//! through the foot-point Jacobians.

use nalgebra::{SMatrix, SVector};

use crate::config::SimConfig;
use crate::morphology::{PdGains, RobotModel};
use crate::sim::terrain::Terrain;

pub const DOF: usize = 7;
pub const NUM_JOINTS: usize = 4;
pub const NUM_FEET: usize = 2;

/// Joint-stop spring pushing a joint back inside its limits.
const STOP_STIFFNESS: f64 = 60.0;
const STOP_DAMPING: f64 = 3.0;

type Mat = SMatrix<f64, DOF, DOF>;
type Vec7 = SVector<f64, DOF>;

/// Generalized position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynState {
    pub q: [f64; DOF],
    pub qd: [f64; DOF],
}

impl DynState {
    pub fn joint_angles(&self) -> [f64; NUM_JOINTS] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_velocities(&self) -> [f64; NUM_JOINTS] {
        [self.qd[3], self.qd[4], self.qd[5], self.qd[6]]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// Unit direction mapping a (negative) segment z-offset to the world:
/// world offset = offset * [-sin(angle), cos(angle)].
#[inline]
fn seg_dir(angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [-s, c]
}

/// d(seg_dir)/d(angle).
#[inline]
fn seg_dir_deriv(angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [-c, -s]
}

/// One rigid body's kinematics in generalized coordinates: CoM position,
/// linear Jacobian (2 x 7), velocity-product acceleration, angular Jacobian
/// row (constant 0/1 pattern), mass and planar inertia.
struct BodyKin {
    mass: f64,
    inertia: f64,
    com: [f64; 2],
    jac: [[f64; DOF]; 2],
    bias_acc: [f64; 2],
    omega_row: [f64; DOF],
}

/// Kinematic chain terms for one leg.
struct LegFrames {
    hip_world: [f64; 2],
    /// d(hip_world)/d(theta) (from the body-frame anchor rotation).
    hip_dtheta: [f64; 2],
    /// -R(theta) * anchor (second theta derivative of the anchor offset).
    hip_bias: [f64; 2],
    thigh_angle: f64,
    shank_angle: f64,
}

fn leg_frames(model: &RobotModel, q: &[f64; DOF], leg: usize) -> LegFrames {
    let anchor = model.legs[leg].hip_anchor;
    let (s, c) = q[2].sin_cos();
    let rot = [c * anchor[0] - s * anchor[1], s * anchor[0] + c * anchor[1]];
    let hip_world = [q[0] + rot[0], q[1] + rot[1]];
    let hip_dtheta = [-rot[1], rot[0]];
    let hip_bias = [-rot[0], -rot[1]];
    let (hip_idx, knee_idx) = joint_indices(leg);
    LegFrames {
        hip_world,
        hip_dtheta,
        hip_bias,
        thigh_angle: q[2] + q[hip_idx],
        shank_angle: q[2] + q[hip_idx] + q[knee_idx],
    }
}

/// Generalized-coordinate indices of a leg's (hip, knee).
#[inline]
pub fn joint_indices(leg: usize) -> (usize, usize) {
    match leg {
        0 => (3, 4),
        _ => (5, 6),
    }
}

fn body_kinematics(model: &RobotModel, state: &DynState) -> [BodyKin; 5] {
    let trunk = BodyKin {
        mass: model.body.mass,
        inertia: model.body_inertia,
        com: [state.q[0], state.q[1]],
        jac: [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ],
        bias_acc: [0.0, 0.0],
        omega_row: [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    };
    [
        trunk,
        leg_body(model, state, 0, Segment::Thigh),
        leg_body(model, state, 0, Segment::Shank),
        leg_body(model, state, 1, Segment::Thigh),
        leg_body(model, state, 1, Segment::Shank),
    ]
}

#[derive(Clone, Copy)]
enum Segment {
    Thigh,
    Shank,
}

fn leg_body(model: &RobotModel, state: &DynState, leg: usize, segment: Segment) -> BodyKin {
    let qd = &state.qd;
    let frames = leg_frames(model, &state.q, leg);
    let (hip_idx, knee_idx) = joint_indices(leg);
    let leg_model = &model.legs[leg];

    let theta_d = qd[2];
    let thigh_rate = qd[2] + qd[hip_idx];
    let shank_rate = thigh_rate + qd[knee_idx];

    let mut jac = [[0.0; DOF]; 2];
    // Base translation moves every CoM directly; the anchor rotation term is
    // shared by both segments of the leg.
    jac[0][0] = 1.0;
    jac[1][1] = 1.0;
    jac[0][2] = frames.hip_dtheta[0];
    jac[1][2] = frames.hip_dtheta[1];

    let mut bias = [
        frames.hip_bias[0] * theta_d * theta_d,
        frames.hip_bias[1] * theta_d * theta_d,
    ];
    let mut com = frames.hip_world;

    let mut omega_row = [0.0; DOF];
    omega_row[2] = 1.0;
    omega_row[hip_idx] = 1.0;

    // Chain terms: (offset along segment, segment angle, angle rate,
    // generalized coordinates the angle depends on).
    let mut add_term = |offset: f64, angle: f64, rate: f64, coords: &[usize]| {
        let dir = seg_dir(angle);
        let ddir = seg_dir_deriv(angle);
        com[0] += offset * dir[0];
        com[1] += offset * dir[1];
        for &ci in coords {
            jac[0][ci] += offset * ddir[0];
            jac[1][ci] += offset * ddir[1];
        }
        // u'' = -u, so the velocity-product acceleration is -offset*rate^2*u.
        bias[0] -= offset * rate * rate * dir[0];
        bias[1] -= offset * rate * rate * dir[1];
    };

    let (mass, inertia) = match segment {
        Segment::Thigh => {
            add_term(
                leg_model.thigh.origin_z,
                frames.thigh_angle,
                thigh_rate,
                &[2, hip_idx],
            );
            (leg_model.thigh.mass, leg_model.thigh.iyy)
        }
        Segment::Shank => {
            add_term(
                leg_model.knee_offset,
                frames.thigh_angle,
                thigh_rate,
                &[2, hip_idx],
            );
            add_term(
                leg_model.shank.origin_z,
                frames.shank_angle,
                shank_rate,
                &[2, hip_idx, knee_idx],
            );
            omega_row[knee_idx] = 1.0;
            (leg_model.shank.mass, leg_model.shank.iyy)
        }
    };

    BodyKin {
        mass,
        inertia,
        com,
        jac,
        bias_acc: bias,
        omega_row,
    }
}

/// World position of a foot (shank distal point).
pub fn foot_position(model: &RobotModel, q: &[f64; DOF], leg: usize) -> [f64; 2] {
    let frames = leg_frames(model, q, leg);
    let lm = &model.legs[leg];
    let tdir = seg_dir(frames.thigh_angle);
    let sdir = seg_dir(frames.shank_angle);
    [
        frames.hip_world[0] + lm.knee_offset * tdir[0] + lm.foot_offset * sdir[0],
        frames.hip_world[1] + lm.knee_offset * tdir[1] + lm.foot_offset * sdir[1],
    ]
}

/// Foot-point linear Jacobian (2 x 7).
fn foot_jacobian(model: &RobotModel, q: &[f64; DOF], leg: usize) -> [[f64; DOF]; 2] {
    let frames = leg_frames(model, q, leg);
    let (hip_idx, knee_idx) = joint_indices(leg);
    let lm = &model.legs[leg];
    let mut jac = [[0.0; DOF]; 2];
    jac[0][0] = 1.0;
    jac[1][1] = 1.0;
    jac[0][2] = frames.hip_dtheta[0];
    jac[1][2] = frames.hip_dtheta[1];
    for (offset, angle, coords) in [
        (lm.knee_offset, frames.thigh_angle, &[2, hip_idx][..]),
        (
            lm.foot_offset,
            frames.shank_angle,
            &[2, hip_idx, knee_idx][..],
        ),
    ] {
        let ddir = seg_dir_deriv(angle);
        for &ci in coords {
            jac[0][ci] += offset * ddir[0];
            jac[1][ci] += offset * ddir[1];
        }
    }
    jac
}

pub fn foot_velocity(model: &RobotModel, state: &DynState, leg: usize) -> [f64; 2] {
    let jac = foot_jacobian(model, &state.q, leg);
    let mut v = [0.0; 2];
    for i in 0..DOF {
        v[0] += jac[0][i] * state.qd[i];
        v[1] += jac[1][i] * state.qd[i];
    }
    v
}

/// Corners of the trunk box in the world (for termination contact checks).
pub fn body_corners(model: &RobotModel, q: &[f64; DOF]) -> [[f64; 2]; 4] {
    let (s, c) = q[2].sin_cos();
    let hx = model.body.length / 2.0;
    let hz = model.body.height / 2.0;
    let mut out = [[0.0; 2]; 4];
    for (i, (cx, cz)) in [(hx, hz), (hx, -hz), (-hx, hz), (-hx, -hz)]
        .iter()
        .enumerate()
    {
        out[i] = [q[0] + c * cx - s * cz, q[1] + s * cx + c * cz];
    }
    out
}

/// PD torque law: tau_j = clamp(strength * (kp_j (q_des_j - q_j) - kd_j qd_j)).
pub fn pd_torque(
    gains: &PdGains,
    q_des: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    motor_strength: f64,
    tau_max: f64,
) -> [f64; NUM_JOINTS] {
    core::array::from_fn(|j| {
        let raw = motor_strength * (gains.kp[j] * (q_des[j] - q[j]) - gains.kd[j] * qd[j]);
        raw.clamp(-tau_max, tau_max)
    })
}

/// Result of one PD-tick integration.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    pub foot_contacts: [bool; NUM_FEET],
    pub foot_positions: [[f64; 2]; NUM_FEET],
    pub body_contact: bool,
    pub diverged: bool,
}

/// Advance one PD tick of duration `dt` (subdivided into `substeps`
/// semi-implicit Euler steps) under constant joint torques `tau`.
/// `terrain = None` disables contact. Returns contact/divergence info from
/// the last substep.
pub fn physics_step(
    model: &RobotModel,
    state: &mut DynState,
    tau: &[f64; NUM_JOINTS],
    cfg: &SimConfig,
    terrain: Option<&Terrain>,
    friction: f64,
) -> StepInfo {
    let dt = 1.0 / cfg.pd_hz;
    let h = dt / cfg.substeps as f64;
    let mut info = StepInfo::default();

    for _ in 0..cfg.substeps {
        let bodies = body_kinematics(model, state);

        // Mass matrix and bias (velocity-product + gravity) generalized force.
        let mut mass = Mat::zeros();
        let mut rhs = Vec7::zeros();
        for b in &bodies {
            for r in 0..DOF {
                let jxr = b.jac[0][r];
                let jzr = b.jac[1][r];
                let wr = b.omega_row[r];
                if jxr == 0.0 && jzr == 0.0 && wr == 0.0 {
                    continue;
                }
                for cidx in r..DOF {
                    let m = b.mass * (jxr * b.jac[0][cidx] + jzr * b.jac[1][cidx])
                        + b.inertia * wr * b.omega_row[cidx];
                    mass[(r, cidx)] += m;
                }
                // Q = J^T (F - m*a_bias), with gravity F = (0, -m g).
                rhs[r] += jxr * (-b.mass * b.bias_acc[0])
                    + jzr * (-b.mass * cfg.gravity - b.mass * b.bias_acc[1]);
            }
        }
        for r in 0..DOF {
            for cidx in 0..r {
                mass[(r, cidx)] = mass[(cidx, r)];
            }
        }

        // Joint torques, passive damping and limit stops.
        for j in 0..NUM_JOINTS {
            let qi = 3 + j;
            let mut t = tau[j] - cfg.joint_damping * state.qd[qi];
            let [lo, hi] = model.joint_limits(j);
            if state.q[qi] < lo {
                t += STOP_STIFFNESS * (lo - state.q[qi]) - STOP_DAMPING * state.qd[qi];
            } else if state.q[qi] > hi {
                t += STOP_STIFFNESS * (hi - state.q[qi]) - STOP_DAMPING * state.qd[qi];
            }
            rhs[qi] += t;
        }

        // Foot contacts.
        if let Some(terrain) = terrain {
            for leg in 0..NUM_FEET {
                let p = foot_position(model, &state.q, leg);
                info.foot_positions[leg] = p;
                let Some(contact) = terrain.contact(p) else {
                    info.foot_contacts[leg] = false;
                    continue;
                };
                info.foot_contacts[leg] = true;
                let v = foot_velocity(model, state, leg);
                let n = contact.normal;
                let tangent = [n[1], -n[0]];
                let v_n = v[0] * n[0] + v[1] * n[1];
                let v_t = v[0] * tangent[0] + v[1] * tangent[1];
                let f_n = (cfg.contact.stiffness * contact.depth - cfg.contact.damping * v_n)
                    .clamp(0.0, cfg.contact.max_force);
                let f_t =
                    (-cfg.contact.tangential_damping * v_t).clamp(-friction * f_n, friction * f_n);
                let force = [f_n * n[0] + f_t * tangent[0], f_n * n[1] + f_t * tangent[1]];
                let jac = foot_jacobian(model, &state.q, leg);
                for r in 0..DOF {
                    rhs[r] += jac[0][r] * force[0] + jac[1][r] * force[1];
                }
            }
        }

        // Semi-implicit Euler on M qdd = rhs.
        let Some(chol) = mass.cholesky() else {
            info.diverged = true;
            return info;
        };
        let qdd = chol.solve(&rhs);
        for i in 0..DOF {
            state.qd[i] += h * qdd[i];
            state.q[i] += h * state.qd[i];
        }

        if !state.is_finite() || state.qd.iter().any(|v| v.abs() > 1e6) {
            info.diverged = true;
            return info;
        }
    }

    // Final contact state and body-contact check (for termination).
    if let Some(terrain) = terrain {
        for leg in 0..NUM_FEET {
            let p = foot_position(model, &state.q, leg);
            info.foot_positions[leg] = p;
            info.foot_contacts[leg] = terrain.contact(p).is_some();
        }
        info.body_contact = body_corners(model, &state.q)
            .iter()
            .any(|&corner| terrain.contact(corner).is_some());
    } else {
        for leg in 0..NUM_FEET {
            info.foot_positions[leg] = foot_position(model, &state.q, leg);
        }
    }
    info
}

/// Total mechanical energy (kinetic + gravitational potential).
pub fn mechanical_energy(model: &RobotModel, state: &DynState, gravity: f64) -> f64 {
    let bodies = body_kinematics(model, state);
    let mut energy = 0.0;
    for b in &bodies {
        let mut v = [0.0; 2];
        let mut w = 0.0;
        for i in 0..DOF {
            v[0] += b.jac[0][i] * state.qd[i];
            v[1] += b.jac[1][i] * state.qd[i];
            w += b.omega_row[i] * state.qd[i];
        }
        energy += 0.5 * b.mass * (v[0] * v[0] + v[1] * v[1]) + 0.5 * b.inertia * w * w;
        energy += b.mass * gravity * b.com[1];
    }
    energy
}

/// Body z that places the lowest foot exactly `clearance` above the terrain,
/// for the given joint configuration at x = q0.
pub fn resting_height(
    model: &RobotModel,
    terrain: &Terrain,
    x: f64,
    pitch: f64,
    joints: &[f64; NUM_JOINTS],
    clearance: f64,
) -> f64 {
    let q = [x, 0.0, pitch, joints[0], joints[1], joints[2], joints[3]];
    let mut z = f64::NEG_INFINITY;
    for leg in 0..NUM_FEET {
        let p = foot_position(model, &q, leg);
        // Foot z for body z = zb is p[1] + zb; require it to equal
        // terrain height + clearance.
        let needed = terrain.height(p[0]) + clearance - p[1];
        z = z.max(needed);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::morphology::{
        build_robot, BaseRobotSpec, FactorBounds, PdCorrectionPoly, ScalingFactors,
    };

    fn model() -> RobotModel {
        build_robot(
            &BaseRobotSpec::default(),
            &ScalingFactors::DEFAULT,
            &PdCorrectionPoly::default(),
            &FactorBounds::default(),
        )
        .unwrap()
    }

    fn nominal_state(model: &RobotModel, z: f64) -> DynState {
        DynState {
            q: [
                0.0,
                z,
                0.0,
                model.nominal_pose[0],
                model.nominal_pose[1],
                model.nominal_pose[2],
                model.nominal_pose[3],
            ],
            qd: [0.0; DOF],
        }
    }

    #[test]
    fn pd_torque_cases() {
        let gains = PdGains::uniform(30.0, 1.0);
        let q = [0.0; 4];
        // Zero error, zero velocity -> zero torque.
        let tau = pd_torque(&gains, &q, &q, &[0.0; 4], 1.0, 33.5);
        assert_eq!(tau, [0.0; 4]);
        // kp=30, kd=1, err=0.1, qd=0.2 -> 2.8.
        let tau = pd_torque(&gains, &[0.1; 4], &q, &[0.2; 4], 1.0, 33.5);
        for t in tau {
            assert!((t - 2.8).abs() < 1e-12);
        }
        // Saturation at tau_max.
        let tau = pd_torque(&gains, &[10.0; 4], &q, &[0.0; 4], 1.0, 33.5);
        assert_eq!(tau, [33.5; 4]);
        // Motor strength scales before the clamp.
        let tau = pd_torque(&gains, &[0.1; 4], &q, &[0.0; 4], 0.5, 33.5);
        for t in tau {
            assert!((t - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gravity_zero_torque_rest_stays() {
        let model = model();
        let cfg = SimConfig {
            gravity: 0.0,
            ..SimConfig::default()
        };
        let mut state = nominal_state(&model, 0.5);
        let before = state;
        for _ in 0..50 {
            let info = physics_step(&model, &mut state, &[0.0; 4], &cfg, None, 0.8);
            assert!(!info.diverged);
        }
        for i in 0..DOF {
            assert!((state.q[i] - before.q[i]).abs() < 1e-12);
            assert!(state.qd[i].abs() < 1e-12);
        }
    }

    #[test]
    fn free_fall_matches_kinematics() {
        let model = model();
        let cfg = SimConfig::default();
        let mut state = nominal_state(&model, 10.0);
        for _ in 0..20 {
            // 20 PD ticks at 200 Hz = 0.1 s.
            let info = physics_step(&model, &mut state, &[0.0; 4], &cfg, None, 0.8);
            assert!(!info.diverged);
        }
        assert!(
            (state.qd[1] - (-0.981)).abs() <= 1e-3,
            "vz = {}",
            state.qd[1]
        );
        // x untouched, joints untouched (no torque, symmetric gravity).
        assert!(state.qd[0].abs() < 1e-9);
    }

    #[test]
    fn passive_swing_conserves_energy() {
        let model = model();
        let cfg = SimConfig {
            gravity: 0.0,
            joint_damping: 0.0,
            ..SimConfig::default()
        };
        let mut state = nominal_state(&model, 1.0);
        state.qd = [0.0, 0.0, 0.3, 0.8, -0.5, -0.6, 0.4];
        let e0 = mechanical_energy(&model, &state, cfg.gravity);
        assert!(e0 > 0.0);
        for _ in 0..200 {
            // 1 simulated second.
            let info = physics_step(&model, &mut state, &[0.0; 4], &cfg, None, 0.8);
            assert!(!info.diverged);
        }
        let e1 = mechanical_energy(&model, &state, cfg.gravity);
        let drift = (e1 - e0).abs() / e0;
        assert!(drift <= 0.01, "energy drift {drift}");
    }

    #[test]
    fn swing_with_gravity_conserves_energy() {
        let model = model();
        let cfg = SimConfig {
            joint_damping: 0.0,
            ..SimConfig::default()
        };
        let mut state = nominal_state(&model, 0.6);
        state.qd = [0.0, 0.0, 0.0, 0.5, -0.3, -0.4, 0.2];
        // Reference the energy to the starting height so the relative bound
        // is meaningful while the robot falls freely.
        let e0 = mechanical_energy(&model, &state, cfg.gravity);
        let mut max_drift = 0.0f64;
        for _ in 0..40 {
            // 0.2 s of contact-free fall with swinging legs.
            physics_step(&model, &mut state, &[0.0; 4], &cfg, None, 0.8);
            let e = mechanical_energy(&model, &state, cfg.gravity);
            max_drift = max_drift.max((e - e0).abs());
        }
        // Kinetic energy grows to ~15 J over the window; allow 1% of that.
        assert!(max_drift <= 0.15, "energy drift {max_drift} J");
    }

    #[test]
    fn standing_on_ground_settles() {
        let model = model();
        let cfg = SimConfig::default();
        let terrain = Terrain::flat(0.0);
        let joints = model.nominal_pose;
        let z = resting_height(&model, &terrain, 0.0, 0.0, &joints, 0.001);
        let mut state = DynState {
            q: [0.0, z, 0.0, joints[0], joints[1], joints[2], joints[3]],
            qd: [0.0; DOF],
        };
        // PD holds the nominal pose; the robot should settle without falling
        // or diverging.
        let mut last = StepInfo::default();
        for _ in 0..400 {
            let tau = pd_torque(
                &model.pd,
                &model.nominal_pose,
                &state.joint_angles(),
                &state.joint_velocities(),
                1.0,
                cfg.tau_max,
            );
            last = physics_step(&model, &mut state, &tau, &cfg, Some(&terrain), 0.8);
            assert!(!last.diverged);
        }
        assert!(
            last.foot_contacts.iter().all(|&c| c),
            "feet should be in contact"
        );
        assert!(!last.body_contact);
        assert!(state.q[1] > 0.2, "body height {}", state.q[1]);
        assert!(state.q[2].abs() < 0.3, "pitch {}", state.q[2]);
    }

    #[test]
    fn foot_position_nominal_geometry() {
        let model = model();
        let state = nominal_state(&model, 0.0);
        let front = foot_position(&model, &state.q, 0);
        let hind = foot_position(&model, &state.q, 1);
        // Symmetric pose: feet mirror around the hips in x and share z.
        assert!((front[1] - hind[1]).abs() < 1e-12);
        assert!((front[0] - 0.25 - (hind[0] + 0.25)).abs() < 1e-12);
        assert!((front[1] - (-model.stand_height)).abs() < 1e-12);
    }

    #[test]
    fn foot_jacobian_matches_finite_differences() {
        let model = model();
        let mut q = [0.03, 0.4, 0.1, 0.7, -1.1, 0.5, -1.3];
        let jac = foot_jacobian(&model, &q, 0);
        let h = 1e-7;
        for i in 0..DOF {
            let orig = q[i];
            q[i] = orig + h;
            let plus = foot_position(&model, &q, 0);
            q[i] = orig - h;
            let minus = foot_position(&model, &q, 0);
            q[i] = orig;
            let dx = (plus[0] - minus[0]) / (2.0 * h);
            let dz = (plus[1] - minus[1]) / (2.0 * h);
            assert!((jac[0][i] - dx).abs() < 1e-6, "dx mismatch at {i}");
            assert!((jac[1][i] - dz).abs() < 1e-6, "dz mismatch at {i}");
        }
    }
}
