//! Statics of the tip section: force and torque balance, soft-joint reactions,
//! blocked force and payload limits.
//!
//! All vectors are expressed in the tip frame. The balance equations are
//! implemented as residuals (`inertial term − applied loads`) so that callers
//! can test equilibrium or solve for an unknown reaction.

use std::io::Write;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::kinematics::DeviceGeometry;
use crate::STANDARD_GRAVITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("spool radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("moment arm `{0}` has zero length")]
    ZeroMomentArm(&'static str),
    #[error("invalid blocked-force config: {0}")]
    InvalidConfig(String),
}

/// Mass properties of the tip section and the lever arms of the loads acting
/// on it, measured from the active joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TipInertia {
    /// kg
    pub m: f64,
    /// kg·m², about the centre of mass.
    pub inertia: Matrix3<f64>,
    /// Tendon attachment arm, m.
    pub r_t: Vec3,
    /// Centre-of-mass arm, m.
    pub r_g: Vec3,
    /// Environment contact arm, m.
    pub r_e: Vec3,
}

impl Default for TipInertia {
    fn default() -> Self {
        Self {
            m: 0.08,
            inertia: Matrix3::from_diagonal(&Vec3::new(4e-5, 4e-5, 2e-5)),
            r_t: Vec3::new(0.018, 0.0, 0.01),
            r_g: Vec3::new(0.0, 0.0, 0.045),
            r_e: Vec3::new(0.0, 0.0, 0.0883),
        }
    }
}

/// Diagonal 6-DOF spring-damper model of the soft joint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftJointParams {
    /// `(k_x, k_y, k_z)`, N/m.
    pub k_lin: Vec3,
    /// `(b_x, b_y, b_z)`, N·s/m.
    pub b_lin: Vec3,
    /// `(k_θ, k_β, k_γ)`, N·m/rad.
    pub k_rot: Vec3,
    /// `(b_θ, b_β, b_γ)`, N·m·s/rad.
    pub b_rot: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    /// Internal pressure, Pa.
    pub pressure: f64,
    /// Cross-sectional area, m².
    pub area: f64,
}

impl BodyState {
    /// Body filling a round pipe of the given diameter.
    pub fn in_pipe(pressure: f64, diameter: f64) -> Self {
        Self {
            pressure,
            area: std::f64::consts::PI * diameter * diameter / 4.0,
        }
    }
}

/// Every load term of the balance equations. Unused terms stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceBreakdown {
    pub gravity: Vec3,
    pub tendon: Vec3,
    pub environment: Vec3,
    pub propulsion: Vec3,
    pub centrifugal: Vec3,
    pub spring_linear: Vec3,
    pub damper_linear: Vec3,
    pub tau_e: Vec3,
    pub tau_spring: Vec3,
    pub tau_damper: Vec3,
    /// Spool motor torque, N·m.
    pub tau_m: f64,
}

/// `F_p = ½·P_b·A_b`, along the growth axis.
pub fn propulsion_force(body: &BodyState) -> f64 {
    0.5 * body.pressure * body.area
}

/// `½·(L2/2 + h)·(θ̇² + β̇² + γ̇²)`. The expression carries no mass factor, so
/// only relative magnitudes are meaningful.
pub fn centrifugal_term(geom: &DeviceGeometry, joint_rates: &Vec3) -> f64 {
    0.5 * (geom.l2 / 2.0 + geom.h) * joint_rates.norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpringDamperReaction {
    pub force_spring: Vec3,
    pub force_damper: Vec3,
    pub torque_spring: Vec3,
    pub torque_damper: Vec3,
}

pub fn spring_damper_reaction(
    params: &SoftJointParams,
    linear_def: &Vec3,
    linear_rate: &Vec3,
    rot_def: &Vec3,
    rot_rate: &Vec3,
) -> SpringDamperReaction {
    SpringDamperReaction {
        force_spring: params.k_lin.component_mul(linear_def),
        force_damper: params.b_lin.component_mul(linear_rate),
        torque_spring: params.k_rot.component_mul(rot_def),
        torque_damper: params.b_rot.component_mul(rot_rate),
    }
}

/// Sum of applied forces in the force balance.
pub fn net_force(b: &ForceBreakdown) -> Vec3 {
    b.gravity
        + b.tendon
        + b.environment
        + b.propulsion
        + b.centrifugal
        + b.spring_linear
        + b.damper_linear
}

/// Sum of applied moments about the active joint.
pub fn net_torque(b: &ForceBreakdown, inertia: &TipInertia) -> Vec3 {
    b.tau_e
        + inertia.r_t.cross(&b.tendon)
        + inertia.r_g.cross(&b.gravity)
        + inertia.r_e.cross(&b.environment)
        + b.tau_spring
        + b.tau_damper
}

/// `m·a − ΣF`; zero when the force balance holds.
pub fn force_residual(b: &ForceBreakdown, inertia: &TipInertia, accel: &Vec3) -> Vec3 {
    accel * inertia.m - net_force(b)
}

/// `I·α − ΣM`; zero when the torque balance holds.
pub fn torque_residual(b: &ForceBreakdown, inertia: &TipInertia, ang_accel: &Vec3) -> Vec3 {
    inertia.inertia * ang_accel - net_torque(b, inertia)
}

/// Tendon tension at motor stall, `τ_m / r_m`.
pub fn blocked_tendon_force(tau_m: f64, r_m: f64) -> Result<f64, DynamicsError> {
    if !(r_m > 0.0) {
        return Err(DynamicsError::NonPositiveRadius(r_m));
    }
    Ok(tau_m / r_m)
}

/// Largest tip mass the stalled tendon can hold against gravity:
/// `|r_t|·(τ_m/r_m) / (|r_G|·g)`.
pub fn max_liftable_tip_mass(
    tau_m: f64,
    r_m: f64,
    inertia: &TipInertia,
    g: f64,
) -> Result<f64, DynamicsError> {
    let force = blocked_tendon_force(tau_m, r_m)?;
    let arm_t = inertia.r_t.norm();
    let arm_g = inertia.r_g.norm();
    if arm_t == 0.0 {
        return Err(DynamicsError::ZeroMomentArm("r_t"));
    }
    if arm_g == 0.0 {
        return Err(DynamicsError::ZeroMomentArm("r_g"));
    }
    Ok(arm_t * force / (arm_g * g))
}

/// Quasi-static tendon tension needed to hold the joint at `bend` radians
/// when gravity acts on the tip at `gravity_sine` (sine of the angle between
/// the tip axis and the vertical), with joint stiffness `k_rot`.
pub fn holding_tendon_force(
    inertia: &TipInertia,
    g: f64,
    gravity_sine: f64,
    k_rot: f64,
    bend: f64,
) -> Result<f64, DynamicsError> {
    let arm_t = inertia.r_t.norm();
    if arm_t == 0.0 {
        return Err(DynamicsError::ZeroMomentArm("r_t"));
    }
    let torque = inertia.m * g * inertia.r_g.norm() * gravity_sine.abs() + k_rot * bend.abs();
    Ok(torque / arm_t)
}

/// Pulsed stall test against a fixed force sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockedForceConfig {
    /// Stall torque, N·m.
    pub tau_m: f64,
    /// Spool radius, m.
    pub r_m: f64,
    /// PWM period, s.
    pub period: f64,
    /// Fraction of the period the motor is driven.
    pub duty: f64,
    pub pulses: usize,
    /// Ramp time from release to stall and back, s.
    pub rise_time: f64,
    pub sample_rate: f64,
    /// Mass resting on the sensor, kg.
    pub tip_mass: f64,
    pub gravity: f64,
    /// Unit direction of the tendon pull in the sensor frame.
    pub tendon_axis: Vec3,
    /// Unit direction of gravity in the sensor frame.
    pub gravity_axis: Vec3,
}

impl Default for BlockedForceConfig {
    fn default() -> Self {
        Self {
            tau_m: 13.0e-3,
            r_m: DeviceGeometry::default().r_m,
            period: 15.0,
            duty: 0.667,
            pulses: 3,
            rise_time: 0.5,
            sample_rate: 100.0,
            tip_mass: TipInertia::default().m,
            gravity: STANDARD_GRAVITY,
            tendon_axis: Vec3::z(),
            gravity_axis: -Vec3::z(),
        }
    }
}

impl BlockedForceConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidConfig(m.to_string()));
        if !(self.r_m > 0.0) {
            return Err(DynamicsError::NonPositiveRadius(self.r_m));
        }
        if !(self.tau_m >= 0.0) {
            return bad("tau_m must be non-negative");
        }
        if !(self.period > 0.0 && self.sample_rate > 0.0) {
            return bad("period and sample_rate must be positive");
        }
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return bad("duty must lie in (0, 1]");
        }
        if !(self.rise_time >= 0.0 && 2.0 * self.rise_time <= self.period * self.duty) {
            return bad("rise_time must fit twice inside the on-time");
        }
        if (self.tendon_axis.norm() - 1.0).abs() > 1e-9 || (self.gravity_axis.norm() - 1.0).abs() > 1e-9 {
            return bad("axes must be unit vectors");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub t: f64,
    /// Sensor reading including the tip weight, N.
    pub raw: Vec3,
    /// Reading with the weight removed, N.
    pub compensated: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockedForceReport {
    pub peak: Vec3,
    pub peak_total: f64,
    /// `peak_total · r_m`, N·m.
    pub back_solved_tau: f64,
}

fn pulse_envelope(t: f64, cfg: &BlockedForceConfig) -> f64 {
    let phase = t.rem_euclid(cfg.period);
    let on = cfg.duty * cfg.period;
    let rise = cfg.rise_time;
    if rise == 0.0 {
        return if phase < on { 1.0 } else { 0.0 };
    }
    if phase < rise {
        phase / rise
    } else if phase < on {
        1.0
    } else if phase < on + rise {
        1.0 - (phase - on) / rise
    } else {
        0.0
    }
}

/// Simulated sensor trace of repeated stall pulses.
pub fn simulate_blocked_force(cfg: &BlockedForceConfig) -> Result<Vec<ForceSample>, DynamicsError> {
    cfg.validate()?;
    let stall = blocked_tendon_force(cfg.tau_m, cfg.r_m)?;
    let weight = cfg.gravity_axis * (cfg.tip_mass * cfg.gravity);
    let n = (cfg.pulses as f64 * cfg.period * cfg.sample_rate).round() as usize;
    Ok((0..=n)
        .map(|i| {
            let t = i as f64 / cfg.sample_rate;
            let tendon = cfg.tendon_axis * (stall * pulse_envelope(t, cfg));
            let raw = tendon + weight;
            ForceSample {
                t,
                raw,
                compensated: raw - weight,
            }
        })
        .collect())
}

pub fn blocked_force_report(trace: &[ForceSample], r_m: f64) -> BlockedForceReport {
    let mut peak = Vec3::zeros();
    let mut peak_total = 0.0f64;
    for s in trace {
        let c = s.compensated;
        for k in 0..3 {
            if c[k].abs() > peak[k].abs() {
                peak[k] = c[k];
            }
        }
        peak_total = peak_total.max(c.norm());
    }
    BlockedForceReport {
        peak,
        peak_total,
        back_solved_tau: peak_total * r_m,
    }
}

/// Writes the compensated trace as `t_s,fx_N,fy_N,fz_N,ftotal_N`.
pub fn write_force_csv<W: Write>(writer: W, trace: &[ForceSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_s", "fx_N", "fy_N", "fz_N", "ftotal_N"])?;
    for s in trace {
        let c = s.compensated;
        w.write_record([
            s.t.to_string(),
            c.x.to_string(),
            c.y.to_string(),
            c.z.to_string(),
            c.norm().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
