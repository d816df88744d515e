//! Morphology scaling: from a 4-vector of leg-segment scale factors to a
//! concrete planar robot description.
//!
//! Factor indexing follows the leg-pair convention: 0 = front thigh,
//! 1 = front shank, 2 = hind thigh, 3 = hind shank. One factor governs both
//! legs of a pair; the planar model keeps a single effective leg per pair.
//!
//! Scaling a segment by `xi` stretches its box geometry to `l*xi`, moves the
//! center of mass to `-l*xi/2`, scales the mass to `m*xi`, recomputes the
//! uniform-cuboid inertia from the scaled mass and length, and shifts the
//! distal joint anchor to `z*xi`. Proportional-derivative gains of the joint
//! proximal to a resized segment are corrected by the cubic factor
//! `eta(xi) = a*xi^3 + b*xi^2 + c*xi + d` with `eta(1) = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_FACTORS: usize = 4;
pub const FACTOR_NAMES: [&str; NUM_FACTORS] =
    ["front_thigh", "front_shank", "hind_thigh", "hind_shank"];

#[derive(Debug, Error, PartialEq)]
pub enum MorphologyError {
    #[error("scale factor {index} ({name}) = {value} outside [{min}, {max}]")]
    FactorOutOfRange {
        index: usize,
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid factor bounds: c_min = {min} must be <= c_max = {max} and positive")]
    InvalidBounds { min: f64, max: f64 },
    #[error("pd correction polynomial coefficients sum to {sum}, expected 1 (strict mode)")]
    PolynomialNotNormalized { sum: f64 },
    #[error("pd correction polynomial coefficients sum to {sum}, cannot renormalize")]
    PolynomialDegenerate { sum: f64 },
    #[error("morphology grid needs at least 2 levels per factor, got {levels}")]
    GridTooCoarse { levels: usize },
    #[error("invalid link geometry: {0}")]
    InvalidGeometry(String),
}

/// Feasible range `[c_min, c_max]` for every scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorBounds {
    pub c_min: f64,
    pub c_max: f64,
}

impl Default for FactorBounds {
    fn default() -> Self {
        Self {
            c_min: 0.6,
            c_max: 1.4,
        }
    }
}

impl FactorBounds {
    pub fn new(c_min: f64, c_max: f64) -> Result<Self, MorphologyError> {
        // A degenerate interval (c_min == c_max) is allowed: sampling then
        // returns the single admissible point.
        if !(c_min > 0.0 && c_max.is_finite() && c_min <= c_max) {
            return Err(MorphologyError::InvalidBounds {
                min: c_min,
                max: c_max,
            });
        }
        Ok(Self { c_min, c_max })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.c_min && v <= self.c_max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.c_min, self.c_max)
    }
}

/// The co-design decision variable: thigh/shank scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors(pub [f64; NUM_FACTORS]);

impl ScalingFactors {
    pub const DEFAULT: ScalingFactors = ScalingFactors([1.0; NUM_FACTORS]);

    pub fn new(xi: [f64; NUM_FACTORS], bounds: &FactorBounds) -> Result<Self, MorphologyError> {
        for (index, &value) in xi.iter().enumerate() {
            if !value.is_finite() || !bounds.contains(value) {
                return Err(MorphologyError::FactorOutOfRange {
                    index,
                    name: FACTOR_NAMES[index],
                    value,
                    min: bounds.c_min,
                    max: bounds.c_max,
                });
            }
        }
        Ok(Self(xi))
    }

    pub fn front_thigh(&self) -> f64 {
        self.0[0]
    }
    pub fn front_shank(&self) -> f64 {
        self.0[1]
    }
    pub fn hind_thigh(&self) -> f64 {
        self.0[2]
    }
    pub fn hind_shank(&self) -> f64 {
        self.0[3]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Compact label such as `1.00_0.80_1.20_1.40`, used in file names.
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|v| format!("{v:.2}"))
            .collect::<Vec<_>>()
            .join("_")
    }
}

/// Original (unscaled) geometry of one leg segment. `distal_offset` is the
/// z-position of the joint (or foot point) the segment terminates in:
/// `z_knee` for a thigh, `z_ankle` for a shank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    /// Original length l (m).
    pub length: f64,
    /// Original mass m (kg).
    pub mass: f64,
    /// Side b of the square cross-section (m).
    pub cross_section: f64,
    /// Original distal joint z-offset (m), equal to -length.
    pub distal_offset: f64,
}

impl LinkGeometry {
    pub fn validate(&self) -> Result<(), MorphologyError> {
        if !(self.length > 0.0 && self.mass > 0.0 && self.cross_section > 0.0) {
            return Err(MorphologyError::InvalidGeometry(format!(
                "length, mass and cross_section must be positive (got {}, {}, {})",
                self.length, self.mass, self.cross_section
            )));
        }
        if (self.distal_offset.abs() - self.length).abs() > 1e-12 {
            return Err(MorphologyError::InvalidGeometry(format!(
                "|distal_offset| = {} must equal the segment length {}",
                self.distal_offset.abs(),
                self.length
            )));
        }
        Ok(())
    }
}

/// One scaled leg segment: the URDF-style quantities after applying `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledLink {
    /// Center-of-mass z-offset from the proximal joint: -(l*xi)/2.
    pub origin_z: f64,
    /// Scaled mass m*xi (kg).
    pub mass: f64,
    /// Inertia about the box axes through the CoM (kg m^2).
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    /// Collision/visual box size (b, b, l*xi).
    pub size: [f64; 3],
}

impl ScaledLink {
    /// Scaled segment length (m).
    pub fn length(&self) -> f64 {
        self.size[2]
    }
}

/// Scale one leg segment. Pure function of its inputs.
pub fn scale_link(
    geom: &LinkGeometry,
    xi: f64,
    factor_index: usize,
    bounds: &FactorBounds,
) -> Result<ScaledLink, MorphologyError> {
    geom.validate()?;
    if !xi.is_finite() || !bounds.contains(xi) {
        return Err(MorphologyError::FactorOutOfRange {
            index: factor_index,
            name: FACTOR_NAMES[factor_index.min(NUM_FACTORS - 1)],
            value: xi,
            min: bounds.c_min,
            max: bounds.c_max,
        });
    }
    let length = geom.length * xi;
    let mass = geom.mass * xi;
    let b = geom.cross_section;
    // Uniform cuboid about its CoM, from the scaled mass and length.
    let ixx = mass / 12.0 * (b * b + length * length);
    Ok(ScaledLink {
        origin_z: -length / 2.0,
        mass,
        ixx,
        iyy: ixx,
        izz: mass * b * b / 6.0,
        size: [b, b, length],
    })
}

/// Cubic proportional-gain correction polynomial; `eval(1) == 1` so the
/// default morphology keeps its gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdCorrectionPoly {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for PdCorrectionPoly {
    /// Pure proportional scaling: eta(xi) = xi.
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 1.0,
            d: 0.0,
        }
    }
}

impl PdCorrectionPoly {
    const SUM_TOLERANCE: f64 = 1e-9;

    /// Build a polynomial whose coefficients sum to 1. In strict mode a
    /// violating sum is an error; otherwise the coefficients are divided by
    /// their sum.
    pub fn new(a: f64, b: f64, c: f64, d: f64, strict: bool) -> Result<Self, MorphologyError> {
        let sum = a + b + c + d;
        if !sum.is_finite() || sum.abs() < Self::SUM_TOLERANCE {
            return Err(MorphologyError::PolynomialDegenerate { sum });
        }
        if (sum - 1.0).abs() <= Self::SUM_TOLERANCE {
            return Ok(Self { a, b, c, d });
        }
        if strict {
            return Err(MorphologyError::PolynomialNotNormalized { sum });
        }
        Ok(Self {
            a: a / sum,
            b: b / sum,
            c: c / sum,
            d: d / sum,
        })
    }

    /// eta = a*xi^3 + b*xi^2 + c*xi + d, evaluated by Horner's scheme.
    pub fn eval(&self, xi: f64) -> f64 {
        ((self.a * xi + self.b) * xi + self.c) * xi + self.d
    }
}

/// Per-joint PD gains for the 4 actuated joints, ordered
/// (front hip-pitch, front knee, hind hip-pitch, hind knee).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: [f64; 4],
    pub kd: [f64; 4],
}

impl PdGains {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self {
            kp: [kp; 4],
            kd: [kd; 4],
        }
    }
}

/// Fixed body (trunk) description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    /// Box length along x (m).
    pub length: f64,
    /// Box height along z (m).
    pub height: f64,
    pub mass: f64,
    /// Hip anchor x offset from the body center (front at +, hind at -).
    pub hip_x: f64,
    /// Hip anchor z offset from the body center.
    pub hip_z: f64,
}

impl Default for BodySpec {
    fn default() -> Self {
        Self {
            length: 0.6,
            height: 0.2,
            mass: 6.0,
            hip_x: 0.25,
            hip_z: -0.1,
        }
    }
}

impl BodySpec {
    /// Planar rotational inertia of the body box about its CoM (y axis).
    pub fn inertia(&self) -> f64 {
        self.mass / 12.0 * (self.length * self.length + self.height * self.height)
    }
}

/// Base robot description: the xi = (1,1,1,1) robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseRobotSpec {
    pub body: BodySpec,
    pub thigh: LinkGeometry,
    pub shank: LinkGeometry,
    /// Base PD gains shared by all four joints before correction.
    pub kp: f64,
    pub kd: f64,
    /// Joint angle limits (rad): hip pitch and knee, same for both legs.
    pub hip_limits: [f64; 2],
    pub knee_limits: [f64; 2],
    /// Nominal standing pose (rad): hip pitch and knee, same for both legs.
    pub nominal_hip: f64,
    pub nominal_knee: f64,
}

impl Default for BaseRobotSpec {
    fn default() -> Self {
        Self {
            body: BodySpec::default(),
            thigh: LinkGeometry {
                length: 0.2,
                mass: 0.5,
                cross_section: 0.03,
                distal_offset: -0.2,
            },
            shank: LinkGeometry {
                length: 0.2,
                mass: 0.5,
                cross_section: 0.03,
                distal_offset: -0.2,
            },
            kp: 30.0,
            kd: 1.0,
            hip_limits: [-1.9, 1.9],
            knee_limits: [-2.6, -0.15],
            nominal_hip: 0.6,
            nominal_knee: -1.2,
        }
    }
}

impl BaseRobotSpec {
    pub fn validate(&self) -> Result<(), MorphologyError> {
        self.thigh.validate()?;
        self.shank.validate()?;
        if !(self.body.length > 0.0 && self.body.height > 0.0 && self.body.mass > 0.0) {
            return Err(MorphologyError::InvalidGeometry(
                "body dimensions and mass must be positive".into(),
            ));
        }
        if !(self.kp > 0.0 && self.kd >= 0.0) {
            return Err(MorphologyError::InvalidGeometry(format!(
                "kp must be > 0 and kd >= 0 (got kp = {}, kd = {})",
                self.kp, self.kd
            )));
        }
        Ok(())
    }
}

/// One effective (left/right merged) leg of the planar model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegModel {
    pub thigh: ScaledLink,
    pub shank: ScaledLink,
    /// Hip anchor in the body frame.
    pub hip_anchor: [f64; 2],
    /// Knee joint z-offset from the hip along the thigh: z_knee * xi_thigh.
    pub knee_offset: f64,
    /// Foot point z-offset from the knee along the shank: z_ankle * xi_shank.
    pub foot_offset: f64,
}

/// Derived planar rigid-body description for one morphology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub body: BodySpec,
    pub body_inertia: f64,
    /// legs[0] = front, legs[1] = hind.
    pub legs: [LegModel; 2],
    pub pd: PdGains,
    pub total_mass: f64,
    pub xi: ScalingFactors,
    pub hip_limits: [f64; 2],
    pub knee_limits: [f64; 2],
    pub nominal_pose: [f64; 4],
    /// Composite CoM x-offset from the body center at the nominal pose.
    pub com_x_offset: f64,
    /// Body height above flat ground when standing at the nominal pose.
    pub stand_height: f64,
}

impl RobotModel {
    pub fn joint_limits(&self, joint: usize) -> [f64; 2] {
        if joint % 2 == 0 {
            self.hip_limits
        } else {
            self.knee_limits
        }
    }
}

/// Assemble the full robot for `xi`, correcting PD gains with `poly`:
/// the thigh factor's eta corrects that leg's hip-pitch gains, the shank
/// factor's eta corrects the knee gains.
pub fn build_robot(
    base: &BaseRobotSpec,
    xi: &ScalingFactors,
    poly: &PdCorrectionPoly,
    bounds: &FactorBounds,
) -> Result<RobotModel, MorphologyError> {
    base.validate()?;
    let front_thigh = scale_link(&base.thigh, xi.front_thigh(), 0, bounds)?;
    let front_shank = scale_link(&base.shank, xi.front_shank(), 1, bounds)?;
    let hind_thigh = scale_link(&base.thigh, xi.hind_thigh(), 2, bounds)?;
    let hind_shank = scale_link(&base.shank, xi.hind_shank(), 3, bounds)?;

    let legs = [
        LegModel {
            thigh: front_thigh,
            shank: front_shank,
            hip_anchor: [base.body.hip_x, base.body.hip_z],
            knee_offset: base.thigh.distal_offset * xi.front_thigh(),
            foot_offset: base.shank.distal_offset * xi.front_shank(),
        },
        LegModel {
            thigh: hind_thigh,
            shank: hind_shank,
            hip_anchor: [-base.body.hip_x, base.body.hip_z],
            knee_offset: base.thigh.distal_offset * xi.hind_thigh(),
            foot_offset: base.shank.distal_offset * xi.hind_shank(),
        },
    ];

    let eta = [
        poly.eval(xi.front_thigh()),
        poly.eval(xi.front_shank()),
        poly.eval(xi.hind_thigh()),
        poly.eval(xi.hind_shank()),
    ];
    let pd = PdGains {
        kp: [
            base.kp * eta[0],
            base.kp * eta[1],
            base.kp * eta[2],
            base.kp * eta[3],
        ],
        kd: [
            base.kd * eta[0],
            base.kd * eta[1],
            base.kd * eta[2],
            base.kd * eta[3],
        ],
    };

    let total_mass = base.body.mass
        + legs[0].thigh.mass
        + legs[0].shank.mass
        + legs[1].thigh.mass
        + legs[1].shank.mass;

    let nominal_pose = nominal_stance(base, &legs, xi);

    // Composite CoM x-offset and stand height at the nominal pose, with the
    // body level (pitch 0).
    let mut moment_x = 0.0;
    let mut lowest_foot = 0.0f64;
    for (leg, joints) in legs.iter().zip(nominal_pose.chunks(2)) {
        let (hip, knee) = (joints[0], joints[1]);
        let thigh_dir = rot(hip);
        let shank_dir = rot(hip + knee);
        let knee_pos = [
            leg.hip_anchor[0] + thigh_dir[0] * leg.knee_offset,
            leg.hip_anchor[1] + thigh_dir[1] * leg.knee_offset,
        ];
        let foot_pos = [
            knee_pos[0] + shank_dir[0] * leg.foot_offset,
            knee_pos[1] + shank_dir[1] * leg.foot_offset,
        ];
        let thigh_com_x = leg.hip_anchor[0] + thigh_dir[0] * leg.thigh.origin_z;
        let shank_com_x = knee_pos[0] + shank_dir[0] * leg.shank.origin_z;
        moment_x += leg.thigh.mass * thigh_com_x + leg.shank.mass * shank_com_x;
        lowest_foot = lowest_foot.min(foot_pos[1]);
    }
    let com_x_offset = moment_x / total_mass;
    let stand_height = -lowest_foot;

    Ok(RobotModel {
        body: base.body,
        body_inertia: base.body.inertia(),
        legs,
        pd,
        total_mass,
        xi: *xi,
        hip_limits: base.hip_limits,
        knee_limits: base.knee_limits,
        nominal_pose,
        com_x_offset,
        stand_height,
    })
}

/// Direction (x, z) of a segment whose local axis points down (-z) rotated
/// by `angle` about the y axis: the returned vector maps a (negative)
/// z-offset into the world.
fn rot(angle: f64) -> [f64; 2] {
    // R(angle) applied to the unit z axis; offsets along the segment are
    // negative z values, so world offset = offset * [ -sin, cos ].
    [-angle.sin(), angle.cos()]
}

/// Default standing pose for a morphology. A single fixed pose is statically
/// infeasible across the scale range (a robot with 0.6x front and 1.4x hind
/// legs cannot keep its body level at the base angles), so scaled robots are
/// re-posed by two-link IK: both hips at the same height, each foot directly
/// below its hip, crouch fraction inherited from the base stance. The default
/// morphology keeps the configured base pose bit-for-bit.
fn nominal_stance(base: &BaseRobotSpec, legs: &[LegModel; 2], xi: &ScalingFactors) -> [f64; 4] {
    if xi.0 == [1.0; NUM_FACTORS] {
        return [
            base.nominal_hip,
            base.nominal_knee,
            base.nominal_hip,
            base.nominal_knee,
        ];
    }

    // Crouch fraction of the base stance: hip height over full leg reach.
    let base_reach = base.thigh.length + base.shank.length;
    let base_height = base.thigh.length * base.nominal_hip.cos()
        + base.shank.length * (base.nominal_hip + base.nominal_knee).cos();
    let crouch = base_height / base_reach;

    let reach: Vec<(f64, f64)> = legs
        .iter()
        .map(|l| (l.knee_offset.abs(), l.foot_offset.abs()))
        .collect();
    let max_common = reach.iter().map(|(a, b)| a + b).fold(f64::INFINITY, f64::min);
    let min_common = reach.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let height = (crouch * max_common).clamp(min_common * 1.05 + 1e-4, max_common * 0.999);

    let mut pose = [0.0; 4];
    for (leg, (a, b)) in reach.iter().enumerate() {
        let d2 = height * height;
        // Interior knee angle of the hip-knee-foot triangle; the knee bends
        // backward (negative) as in the base stance.
        let cos_knee = ((a * a + b * b - d2) / (2.0 * a * b)).clamp(-1.0, 1.0);
        let knee = cos_knee.acos() - std::f64::consts::PI;
        // Thigh angle from the vertical hip-foot line; positive leans the
        // thigh forward.
        let cos_hip = ((a * a + d2 - b * b) / (2.0 * a * height)).clamp(-1.0, 1.0);
        let hip = cos_hip.acos();
        pose[2 * leg] = hip.clamp(base.hip_limits[0], base.hip_limits[1]);
        pose[2 * leg + 1] = knee.clamp(base.knee_limits[0], base.knee_limits[1]);
    }
    pose
}

/// i.i.d. uniform factors on the bounds. Sampling order is component 0..3.
pub fn sample_factors<R: Rng>(rng: &mut R, bounds: &FactorBounds) -> ScalingFactors {
    if bounds.c_min == bounds.c_max {
        return ScalingFactors([bounds.c_min; NUM_FACTORS]);
    }
    ScalingFactors(core::array::from_fn(|_| {
        rng.random_range(bounds.c_min..=bounds.c_max)
    }))
}

/// Cartesian product of `levels` equispaced values per factor, ordered
/// lexicographically (factor 0 varies slowest).
pub fn morphology_grid(
    levels: usize,
    bounds: &FactorBounds,
) -> Result<Vec<ScalingFactors>, MorphologyError> {
    if levels < 2 {
        return Err(MorphologyError::GridTooCoarse { levels });
    }
    let step = (bounds.c_max - bounds.c_min) / (levels - 1) as f64;
    let value = |k: usize| {
        if k == levels - 1 {
            bounds.c_max
        } else {
            bounds.c_min + k as f64 * step
        }
    };
    let mut grid = Vec::with_capacity(levels.pow(NUM_FACTORS as u32));
    for i0 in 0..levels {
        for i1 in 0..levels {
            for i2 in 0..levels {
                for i3 in 0..levels {
                    grid.push(ScalingFactors([value(i0), value(i1), value(i2), value(i3)]));
                }
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds() -> FactorBounds {
        FactorBounds::default()
    }

    /// Independent closed-form oracle: uniform cuboid of mass M, square side
    /// b, length L about its CoM.
    fn cuboid_inertia_oracle(mass: f64, b: f64, length: f64) -> (f64, f64, f64) {
        let transverse = mass * (b * b + length * length) / 12.0;
        let axial = mass * (b * b + b * b) / 12.0;
        (transverse, transverse, axial)
    }

    fn test_geom() -> LinkGeometry {
        LinkGeometry {
            length: 0.2,
            mass: 0.5,
            cross_section: 0.03,
            distal_offset: -0.2,
        }
    }

    #[test]
    fn scale_link_identity_case() {
        let link = scale_link(&test_geom(), 1.0, 0, &bounds()).unwrap();
        assert_eq!(link.origin_z, -0.1);
        assert_eq!(link.mass, 0.5);
        assert_eq!(link.size, [0.03, 0.03, 0.2]);
    }

    #[test]
    fn scale_link_matches_cuboid_oracle() {
        // xi = 1.2: mass 0.6, length 0.24.
        let link = scale_link(&test_geom(), 1.2, 0, &bounds()).unwrap();
        assert_eq!(link.mass, 0.6);
        assert_eq!(link.origin_z, -0.12);
        let (ixx, iyy, izz) = cuboid_inertia_oracle(0.6, 0.03, 0.2 * 1.2);
        assert!((link.ixx - ixx).abs() <= 1e-12);
        assert!((link.iyy - iyy).abs() <= 1e-12);
        assert!((link.izz - izz).abs() <= 1e-12);
        assert!((link.izz - 0.6 * 0.03 * 0.03 / 6.0).abs() <= 1e-12);

        // xi = 0.6: the spec's worked ixx value.
        let link = scale_link(&test_geom(), 0.6, 0, &bounds()).unwrap();
        let expected = 0.3 / 12.0 * (0.03f64 * 0.03 + 0.12 * 0.12);
        assert!((link.ixx - expected).abs() <= 1e-12);
    }

    #[test]
    fn scale_link_rejects_out_of_range() {
        let err = scale_link(&test_geom(), 1.5, 2, &bounds()).unwrap_err();
        match err {
            MorphologyError::FactorOutOfRange { index, name, .. } => {
                assert_eq!(index, 2);
                assert_eq!(name, "hind_thigh");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn build_robot_identity_is_bitwise_base() {
        let base = BaseRobotSpec::default();
        let model = build_robot(
            &base,
            &ScalingFactors::DEFAULT,
            &PdCorrectionPoly::default(),
            &bounds(),
        )
        .unwrap();
        // Bitwise equality against independently scaled-at-1 quantities.
        assert_eq!(
            model.legs[0].thigh.mass.to_bits(),
            base.thigh.mass.to_bits()
        );
        assert_eq!(
            model.legs[0].thigh.size[2].to_bits(),
            base.thigh.length.to_bits()
        );
        assert_eq!(
            model.legs[0].knee_offset.to_bits(),
            base.thigh.distal_offset.to_bits()
        );
        assert_eq!(
            model.legs[1].foot_offset.to_bits(),
            base.shank.distal_offset.to_bits()
        );
        for j in 0..4 {
            assert_eq!(model.pd.kp[j].to_bits(), base.kp.to_bits());
            assert_eq!(model.pd.kd[j].to_bits(), base.kd.to_bits());
        }
        let expected_total = base.body.mass + 4.0 * base.thigh.mass;
        assert_eq!(model.total_mass.to_bits(), expected_total.to_bits());
    }

    #[test]
    fn build_robot_scales_mass_and_joints() {
        let base = BaseRobotSpec::default();
        let xi = ScalingFactors([1.4; 4]);
        let model = build_robot(&base, &xi, &PdCorrectionPoly::default(), &bounds()).unwrap();
        let leg_mass: f64 = model.legs.iter().map(|l| l.thigh.mass + l.shank.mass).sum();
        assert!((leg_mass - 1.4 * 4.0 * base.thigh.mass).abs() <= 1e-12);

        let xi = ScalingFactors([0.6, 1.4, 1.0, 1.0]);
        let model = build_robot(&base, &xi, &PdCorrectionPoly::default(), &bounds()).unwrap();
        assert!((model.legs[0].knee_offset - 0.6 * base.thigh.distal_offset).abs() <= 1e-15);
        assert!((model.legs[0].foot_offset - 1.4 * base.shank.distal_offset).abs() <= 1e-15);
        assert_eq!(
            model.legs[1].knee_offset.to_bits(),
            base.thigh.distal_offset.to_bits()
        );
    }

    #[test]
    fn pd_correction_gain_mapping() {
        let base = BaseRobotSpec::default();
        // eta(xi) = xi with the default polynomial.
        let xi = ScalingFactors([0.8, 1.2, 1.0, 0.7]);
        let model = build_robot(&base, &xi, &PdCorrectionPoly::default(), &bounds()).unwrap();
        assert!((model.pd.kp[0] - base.kp * 0.8).abs() <= 1e-12); // front hip <- thigh
        assert!((model.pd.kp[1] - base.kp * 1.2).abs() <= 1e-12); // front knee <- shank
        assert!((model.pd.kp[2] - base.kp * 1.0).abs() <= 1e-12);
        assert!((model.pd.kd[3] - base.kd * 0.7).abs() <= 1e-12);
    }

    #[test]
    fn pd_poly_constraint_and_horner() {
        // Constraint: coefficients summing to 1 evaluate to 1 at xi = 1.
        let poly = PdCorrectionPoly::new(0.1, 0.2, 0.5, 0.2, true).unwrap();
        assert_eq!(poly.eval(1.0), 1.0);

        // Identity polynomial returns its input exactly.
        let ident = PdCorrectionPoly::default();
        for xi in [0.6, 0.8, 1.0, 1.37] {
            assert_eq!(ident.eval(xi), xi);
        }

        // Independent Horner-scheme oracle at xi = 1.4.
        let horner = |coeffs: [f64; 4], x: f64| coeffs.iter().fold(0.0, |acc, &c| acc * x + c);
        let expected = horner([0.1, 0.2, 0.5, 0.2], 1.4);
        assert!((poly.eval(1.4) - expected).abs() <= 1e-15);

        // Strict mode rejects, lenient renormalizes.
        assert!(matches!(
            PdCorrectionPoly::new(0.5, 0.5, 0.5, 0.5, true),
            Err(MorphologyError::PolynomialNotNormalized { .. })
        ));
        let renorm = PdCorrectionPoly::new(0.5, 0.5, 0.5, 0.5, false).unwrap();
        assert!((renorm.eval(1.0) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn nominal_stance_feet_under_hips_and_level() {
        let base = BaseRobotSpec::default();
        // Identity keeps the configured pose bit-for-bit.
        let model =
            build_robot(&base, &ScalingFactors::DEFAULT, &PdCorrectionPoly::default(), &bounds())
                .unwrap();
        assert_eq!(model.nominal_pose[0].to_bits(), base.nominal_hip.to_bits());
        assert_eq!(model.nominal_pose[1].to_bits(), base.nominal_knee.to_bits());

        // Scaled robots stand level with feet under the hips.
        for xi in [
            ScalingFactors([0.6, 1.4, 1.4, 0.6]),
            ScalingFactors([1.4, 1.4, 0.6, 0.6]),
            ScalingFactors([0.7, 1.1, 1.3, 0.9]),
        ] {
            let model =
                build_robot(&base, &xi, &PdCorrectionPoly::default(), &bounds()).unwrap();
            let mut foot_zs = [0.0; 2];
            for (leg_idx, leg) in model.legs.iter().enumerate() {
                let hip = model.nominal_pose[2 * leg_idx];
                let knee = model.nominal_pose[2 * leg_idx + 1];
                let tdir = rot(hip);
                let sdir = rot(hip + knee);
                let foot = [
                    tdir[0] * leg.knee_offset + sdir[0] * leg.foot_offset,
                    tdir[1] * leg.knee_offset + sdir[1] * leg.foot_offset,
                ];
                assert!(
                    foot[0].abs() < 1e-9,
                    "xi {:?}, leg {leg_idx}: foot x offset {}",
                    xi,
                    foot[0]
                );
                foot_zs[leg_idx] = foot[1];
                let [hlo, hhi] = base.hip_limits;
                let [klo, khi] = base.knee_limits;
                assert!(hip >= hlo && hip <= hhi);
                assert!(knee >= klo && knee <= khi);
            }
            assert!(
                (foot_zs[0] - foot_zs[1]).abs() < 1e-9,
                "xi {:?}: hips not level ({} vs {})",
                xi,
                foot_zs[0],
                foot_zs[1]
            );
        }
    }

    #[test]
    fn sample_factors_degenerate_and_deterministic() {
        let point = FactorBounds::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_factors(&mut rng, &point), ScalingFactors([1.0; 4]));

        let mut a = ChaCha8Rng::seed_from_u64(123);
        let mut b = ChaCha8Rng::seed_from_u64(123);
        assert_eq!(
            sample_factors(&mut a, &bounds()),
            sample_factors(&mut b, &bounds())
        );
    }

    #[test]
    fn sample_factors_mean_law_of_large_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = bounds();
        let n = 100_000;
        let mut sums = [0.0f64; 4];
        for _ in 0..n {
            let s = sample_factors(&mut rng, &b);
            for (acc, v) in sums.iter_mut().zip(s.0) {
                *acc += v;
            }
        }
        for acc in sums {
            let mean = acc / n as f64;
            assert!((mean - 1.0).abs() <= 0.01, "empirical mean {mean}");
        }
    }

    #[test]
    fn grid_enumeration() {
        let g3 = morphology_grid(3, &bounds()).unwrap();
        assert_eq!(g3.len(), 81);
        assert_eq!(g3[0], ScalingFactors([0.6; 4]));
        assert_eq!(g3[80], ScalingFactors([1.4; 4]));
        assert!(g3.contains(&ScalingFactors([1.0; 4])));

        let g2 = morphology_grid(2, &bounds()).unwrap();
        assert_eq!(g2.len(), 16);
        for v in &g2 {
            for &c in v.as_slice() {
                assert!(c == 0.6 || c == 1.4);
            }
        }

        assert!(matches!(
            morphology_grid(1, &bounds()),
            Err(MorphologyError::GridTooCoarse { levels: 1 })
        ));
    }

    #[test]
    fn grid_entries_unique() {
        for levels in [2usize, 3] {
            let g = morphology_grid(levels, &bounds()).unwrap();
            let mut keys: Vec<[u64; 4]> = g
                .iter()
                .map(|s| core::array::from_fn(|i| s.0[i].to_bits()))
                .collect();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(keys.len(), levels.pow(4));
        }
    }

    proptest! {
        #[test]
        fn mass_scales_linearly(xi in 0.6f64..=1.4) {
            let at_one = scale_link(&test_geom(), 1.0, 0, &bounds()).unwrap();
            let scaled = scale_link(&test_geom(), xi, 0, &bounds()).unwrap();
            prop_assert_eq!(scaled.mass, xi * at_one.mass);
        }

        #[test]
        fn inertia_strictly_positive(xi in 0.6f64..=1.4) {
            let link = scale_link(&test_geom(), xi, 0, &bounds()).unwrap();
            prop_assert!(link.ixx > 0.0 && link.iyy > 0.0 && link.izz > 0.0);
        }

        #[test]
        fn identity_poly_is_identity(xi in 0.6f64..=1.4) {
            prop_assert_eq!(PdCorrectionPoly::default().eval(xi), xi);
        }
    }
}
