//! Forward kinematics of the external steering device.
//!
//! The device is modelled as a prismatic-spherical-spherical chain:
//!
//! ```text
//!  {0} base ──prismatic (body length)──> {1} passive soft joint
//!      ──rigid segment──> {2} active soft joint ──> {3} tip section
//! ```
//!
//! Each link transform is `[R | P_orig]` with `R = Rz(γ)·Ry(β)·Rx(θ)`
//! (fixed-angle ZYX). The tip point sits at `(0, 0, r_eff)` in frame {3}.
//!
//! Local frames use `z` as the growth axis, `x` as "up" (the direction the
//! up-tendon bends the tip, `β > 0`) and `y` completing a right-handed frame.
//! With this choice the left spool (motor 0) produces `θ > 0` and the right
//! spool (motor 1) produces `θ < 0`.

mod workspace;

pub use workspace::{
    characterization_sweep, percentage_error, polar_angle, tip_direction, workspace_surface,
    write_workspace_csv, Sweep, SweepKind, Workspace, WorkspaceSample,
};

use nalgebra::{Matrix3, Matrix4, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Residual above which a matrix is not accepted as a rotation.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Half of the collision angle of the default soft joint, degrees.
const DEFAULT_HALF_ANGLE_DEG: f64 = 26.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("rotation is not orthonormal (residual {0:.3e})")]
    NotOrthonormal(f64),
    #[error("frame index {0} out of range, expected 0..=3")]
    FrameOutOfRange(usize),
    #[error("motor index {0} out of range, expected 0..=2")]
    MotorOutOfRange(usize),
    #[error("tendon {motor} over-wound: arcsine argument {argument} outside [-1, 1]")]
    TendonOverWound { motor: usize, argument: f64 },
    #[error("joint angle {angle} rad exceeds the steering limit {limit} rad")]
    JointOutOfRange { angle: f64, limit: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("theoretical value must be nonzero")]
    ZeroReference,
}

/// Physical constants of the steering tip. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceGeometry {
    /// Half height of the soft joint.
    pub h: f64,
    /// Radius of the rigid cylinder container.
    pub r: f64,
    /// Length of the tip container.
    pub l2: f64,
    /// Motor spool radius.
    pub r_m: f64,
    /// Radius of the base spool storing uneverted body material.
    pub r_spool_base: f64,
}

impl Default for DeviceGeometry {
    /// `h/r = tan(26.25°)` so the collision limit is 52.5°, `r_eff = 0.0883`,
    /// and `r_m = 13.0 N·mm / 7.40 N`.
    fn default() -> Self {
        let r = 0.02;
        let h = r * DEFAULT_HALF_ANGLE_DEG.to_radians().tan();
        Self {
            h,
            r,
            l2: 0.0883 - h - r,
            r_m: 13.0e-3 / 7.40,
            r_spool_base: 0.02,
        }
    }
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let fields = [
            ("h", self.h),
            ("r", self.r),
            ("l2", self.l2),
            ("r_m", self.r_m),
            ("r_spool_base", self.r_spool_base),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Bend angle at which the two rigid sections collide: `2·atan(h/r)`.
    pub fn alpha_max(&self) -> f64 {
        2.0 * self.h.atan2(self.r)
    }

    pub fn effective_radius(&self) -> f64 {
        effective_radius(self)
    }

    /// Distance between the passive and active joint centres along the
    /// rigid segment. The segment carries the same stack as the tip section.
    pub fn joint_spacing(&self) -> f64 {
        self.effective_radius()
    }

    /// Spool angle at which a single tendon bends the joint to `alpha_max`.
    pub fn max_spool_angle(&self) -> f64 {
        let a = self.alpha_max();
        (self.h * (1.0 - a.cos()) + self.r * a.sin()) / self.r_m
    }
}

/// `r_eff = h + L2 + r`.
pub fn effective_radius(geom: &DeviceGeometry) -> f64 {
    geom.h + geom.l2 + geom.r
}

/// Fixed-angle rotation of one soft joint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotationAngles {
    /// About x, radians.
    pub theta: f64,
    /// About y, radians.
    pub beta: f64,
    /// About z, radians.
    pub gamma: f64,
}

impl RotationAngles {
    pub fn new(theta: f64, beta: f64, gamma: f64) -> Self {
        Self { theta, beta, gamma }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rot_zyx(self.gamma, self.beta, self.theta)
    }

    /// Same rotation as [`RotationAngles::rotation`], as a unit quaternion.
    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.gamma)
            * UnitQuaternion::from_axis_angle(&Vec3::y_axis(), self.beta)
            * UnitQuaternion::from_axis_angle(&Vec3::x_axis(), self.theta)
    }
}

/// Motor spool angles, radians. Index 0: left, 1: right, 2: up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TendonState {
    pub phi: [f64; 3],
}

impl TendonState {
    /// Active-joint angles `(θ₃, β₃)` produced by the three tendons.
    ///
    /// The left and right tendons act antagonistically on `θ₃`; the up tendon
    /// sets `β₃`.
    pub fn joint_angles(&self, geom: &DeviceGeometry) -> Result<(f64, f64), KinematicsError> {
        let q0 = tendon_to_joint(self.phi[0], 0, geom)?;
        let q1 = tendon_to_joint(self.phi[1], 1, geom)?;
        let q2 = tendon_to_joint(self.phi[2], 2, geom)?;
        Ok((q0 + q1, q2))
    }
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Rz(γ)·Ry(β)·Rx(θ)`.
pub fn rot_zyx(gamma: f64, beta: f64, theta: f64) -> Matrix3<f64> {
    rot_z(gamma) * rot_y(beta) * rot_x(theta)
}

/// Largest absolute entry of `RᵀR − I`, combined with `|det R − 1|`.
pub fn orthonormality_residual(rotation: &Matrix3<f64>) -> f64 {
    let gram = rotation.transpose() * rotation - Matrix3::identity();
    let off = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    off.max((rotation.determinant() - 1.0).abs())
}

/// Rigid transform `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl HomogeneousTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Rigid transform from a unit quaternion, which is always a proper
    /// rotation.
    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &HomogeneousTransform) -> HomogeneousTransform {
        HomogeneousTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> HomogeneousTransform {
        let rt = self.rotation.transpose();
        HomogeneousTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Builds `[R | origin]`, rejecting matrices that are not proper rotations.
pub fn compose_transform(
    rotation: Matrix3<f64>,
    origin: Vec3,
) -> Result<HomogeneousTransform, KinematicsError> {
    let residual = orthonormality_residual(&rotation);
    if !(residual <= ORTHONORMAL_TOLERANCE) {
        return Err(KinematicsError::NotOrthonormal(residual));
    }
    Ok(HomogeneousTransform {
        rotation,
        translation: origin,
    })
}

/// Joint configuration of the whole chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainConfiguration {
    /// Prismatic extension between {0} and {1}, meters.
    pub body_length: f64,
    /// Rotation of frames {1}, {2}, {3} relative to their parent.
    pub joints: [RotationAngles; 3],
}

impl ChainConfiguration {
    /// Chain with only the active (distal) joint set.
    pub fn with_active(angles: RotationAngles) -> Self {
        Self {
            body_length: 0.0,
            joints: [RotationAngles::default(), RotationAngles::default(), angles],
        }
    }
}

/// Transform from frame {i-1} to frame {i}, `i ∈ 1..=3`.
pub fn link_transform(
    frame: usize,
    config: &ChainConfiguration,
    geom: &DeviceGeometry,
) -> Result<HomogeneousTransform, KinematicsError> {
    let (rotation, origin) = match frame {
        1 => (
            config.joints[0].rotation(),
            Vec3::new(0.0, 0.0, config.body_length),
        ),
        2 => {
            let r = config.joints[1].rotation();
            (r, r * Vec3::new(0.0, 0.0, geom.joint_spacing()))
        }
        3 => (config.joints[2].rotation(), Vec3::zeros()),
        other => return Err(KinematicsError::FrameOutOfRange(other)),
    };
    compose_transform(rotation, origin)
}

/// Product of link transforms expressing frame {3} in frame {k}.
pub fn chain_transform(
    config: &ChainConfiguration,
    geom: &DeviceGeometry,
    frame: usize,
) -> Result<HomogeneousTransform, KinematicsError> {
    if frame > 3 {
        return Err(KinematicsError::FrameOutOfRange(frame));
    }
    let mut total = HomogeneousTransform::identity();
    for i in frame + 1..=3 {
        total = total.compose(&link_transform(i, config, geom)?);
    }
    Ok(total)
}

/// Tip point `(0, 0, r_eff)` of frame {3} expressed in frame {k}.
pub fn tip_position(
    config: &ChainConfiguration,
    geom: &DeviceGeometry,
    frame: usize,
) -> Result<Vec3, KinematicsError> {
    let tip = Vec3::new(0.0, 0.0, effective_radius(geom));
    Ok(chain_transform(config, geom, frame)?.apply(&tip))
}

fn motor_sign(motor: usize) -> Result<f64, KinematicsError> {
    match motor {
        0 | 2 => Ok(1.0),
        1 => Ok(-1.0),
        other => Err(KinematicsError::MotorOutOfRange(other)),
    }
}

/// Joint angle produced by winding spool `motor` by `phi` radians:
/// `q = (−1)ʲ·[atan(h/r) − asin((h − r_m·φ)/√(h²+r²))]`.
///
/// Evaluated as a single `atan2` of the angle difference so that `φ = 0`
/// yields exactly zero.
pub fn tendon_to_joint(phi: f64, motor: usize, geom: &DeviceGeometry) -> Result<f64, KinematicsError> {
    let sign = motor_sign(motor)?;
    let (h, r) = (geom.h, geom.r);
    let wound = geom.r_m * phi;
    let u = h - wound;
    // c² − u² expanded around u = h keeps the zero-winding case exact
    let w_sq = r * r + wound * (2.0 * h - wound);
    if !(w_sq >= 0.0) {
        return Err(KinematicsError::TendonOverWound {
            motor,
            argument: u / h.hypot(r),
        });
    }
    let w = w_sq.sqrt();
    Ok(sign * (h * w - r * u).atan2(r * w + h * u))
}

/// Spool angle that bends the joint to `q` through tendon `motor`; inverse of
/// [`tendon_to_joint`] on `|q| ≤ alpha_max`.
pub fn joint_to_tendon(q: f64, motor: usize, geom: &DeviceGeometry) -> Result<f64, KinematicsError> {
    let sign = motor_sign(motor)?;
    let limit = geom.alpha_max();
    if !(q.abs() <= limit) {
        return Err(KinematicsError::JointOutOfRange { angle: q, limit });
    }
    let (s, c) = (sign * q).sin_cos();
    Ok((geom.h * (1.0 - c) + geom.r * s) / geom.r_m)
}
