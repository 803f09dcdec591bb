use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use super::fusion::body_to_global;
use super::{check_monotonic, EncoderSample, LocalizationError, SensorFrame, TrajectoryEstimate, TrajectorySample};
use crate::geometry::Vec3;
use crate::STANDARD_GRAVITY;

/// Slack allowed when matching encoder times against the IMU clock, s.
const CLOCK_TOLERANCE: f64 = 1e-9;
/// Speeds below this fall back to the orientation heading in velocity mode.
const MIN_SPEED: f64 = 1e-9;

/// Tip advance for a base-spool rotation: `r·Δθ / factor`.
pub fn spool_to_length(delta_theta: f64, r_spool_base: f64, eversion_factor: f64) -> f64 {
    r_spool_base * delta_theta / eversion_factor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadReckoningMode {
    /// Advance along the tip's forward axis.
    #[default]
    Heading,
    /// Advance along the direction of the integrated velocity.
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeadReckoningConfig {
    pub mode: DeadReckoningMode,
    pub r_spool_base: f64,
    pub eversion_factor: f64,
    pub gravity: f64,
    /// Start of the track in the global frame.
    pub origin: Vec3,
}

impl Default for DeadReckoningConfig {
    fn default() -> Self {
        Self {
            mode: DeadReckoningMode::Heading,
            r_spool_base: 0.02,
            eversion_factor: 2.0,
            gravity: STANDARD_GRAVITY,
            origin: Vec3::zeros(),
        }
    }
}

impl DeadReckoningConfig {
    pub fn validate(&self) -> Result<(), LocalizationError> {
        if !(self.r_spool_base > 0.0 && self.eversion_factor > 0.0) {
            return Err(LocalizationError::InvalidConfig(
                "spool radius and eversion factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Orientation at `t`, interpolated (slerp) between the samples bracketing it.
pub fn orientation_at(
    times: &[f64],
    orientations: &[UnitQuaternion<f64>],
    t: f64,
) -> Result<UnitQuaternion<f64>, LocalizationError> {
    if times.is_empty() {
        return Err(LocalizationError::Empty("orientation stream"));
    }
    let (first, last) = (times[0], times[times.len() - 1]);
    if t < first - CLOCK_TOLERANCE || t > last + CLOCK_TOLERANCE {
        return Err(LocalizationError::Misaligned(format!(
            "time {t} outside orientation stream [{first}, {last}]"
        )));
    }
    let i = times.partition_point(|&x| x <= t);
    if i == 0 {
        return Ok(orientations[0]);
    }
    if i == times.len() {
        return Ok(orientations[i - 1]);
    }
    let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
    Ok(slerp(&orientations[i - 1], &orientations[i], w))
}

fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, w: f64) -> UnitQuaternion<f64> {
    if w == 0.0 {
        return *a;
    }
    if w == 1.0 {
        return *b;
    }
    a.try_slerp(b, w, 1e-12).unwrap_or(*a)
}

/// Incremental heading-mode integrator: each increment moves along the
/// forward axis of the orientation halfway between the previous and the
/// current encoder time.
#[derive(Debug, Clone)]
pub struct HeadingIntegrator {
    position: Vec3,
    path_length: f64,
    last: Option<(f64, UnitQuaternion<f64>)>,
}

impl HeadingIntegrator {
    pub fn new(origin: Vec3) -> Self {
        Self {
            position: origin,
            path_length: 0.0,
            last: None,
        }
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Applies an advance `dl` ending at time `t` with orientation `q`.
    /// Returns the new position and the velocity over the interval.
    pub fn advance(&mut self, t: f64, q: UnitQuaternion<f64>, dl: f64) -> (Vec3, Vec3) {
        let (t0, q0) = self.last.unwrap_or((t, q));
        let heading = slerp(&q0, &q, 0.5) * Vec3::z();
        self.step(t, t0, q, heading, dl)
    }

    fn step(&mut self, t: f64, t0: f64, q: UnitQuaternion<f64>, direction: Vec3, dl: f64) -> (Vec3, Vec3) {
        self.position += direction * dl;
        self.path_length += dl.abs();
        self.last = Some((t, q));
        let v = if t > t0 { direction * (dl / (t - t0)) } else { Vec3::zeros() };
        (self.position, v)
    }
}

/// Integrates encoder increments along the fused orientation.
///
/// `imu` and `orientations` share the IMU clock (one orientation per frame).
/// Encoder times must fall within the IMU stream. The first encoder sample's
/// increment is applied at its own time.
pub fn dead_reckon(
    encoder: &[EncoderSample],
    imu: &[SensorFrame],
    orientations: &[UnitQuaternion<f64>],
    cfg: &DeadReckoningConfig,
) -> Result<TrajectoryEstimate, LocalizationError> {
    cfg.validate()?;
    if imu.len() != orientations.len() {
        return Err(LocalizationError::Misaligned(format!(
            "{} IMU frames but {} orientations",
            imu.len(),
            orientations.len()
        )));
    }
    check_monotonic(encoder, |e| e.t)?;
    check_monotonic(imu, |f| f.t)?;
    let times: Vec<f64> = imu.iter().map(|f| f.t).collect();

    // velocity on the IMU clock, rectangle rule
    let velocities: Vec<Vec3> = if cfg.mode == DeadReckoningMode::Velocity {
        let mut v = Vec3::zeros();
        let mut out = Vec::with_capacity(imu.len());
        for (i, (f, q)) in imu.iter().zip(orientations).enumerate() {
            if i > 0 {
                let a = body_to_global(&f.accel, q.quaternion(), cfg.gravity)?;
                v += a * (f.t - imu[i - 1].t);
            }
            out.push(v);
        }
        out
    } else {
        Vec::new()
    };
    let velocity_at = |t: f64| -> Vec3 {
        let i = times.partition_point(|&x| x <= t);
        if i == 0 {
            return velocities[0];
        }
        if i == times.len() {
            return velocities[i - 1];
        }
        let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
        velocities[i - 1] * (1.0 - w) + velocities[i] * w
    };

    let mut integrator = HeadingIntegrator::new(cfg.origin);
    let mut samples = Vec::with_capacity(encoder.len());
    let mut prev_t: Option<f64> = None;
    for e in encoder {
        let q = orientation_at(&times, orientations, e.t)?;
        let dl = spool_to_length(e.delta_theta, cfg.r_spool_base, cfg.eversion_factor);
        let (p, v) = match cfg.mode {
            DeadReckoningMode::Heading => integrator.advance(e.t, q, dl),
            DeadReckoningMode::Velocity => {
                let t0 = prev_t.unwrap_or(e.t);
                let vel = velocity_at(0.5 * (t0 + e.t));
                let dir = match vel.try_normalize(MIN_SPEED) {
                    Some(d) => d,
                    None => {
                        let q0 = orientation_at(&times, orientations, t0)?;
                        slerp(&q0, &q, 0.5) * Vec3::z()
                    }
                };
                integrator.step(e.t, t0, q, dir, dl)
            }
        };
        prev_t = Some(e.t);
        samples.push(TrajectorySample { t: e.t, p, v, q });
    }
    Ok(TrajectoryEstimate { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level_frames(n: usize, dt: f64, q: UnitQuaternion<f64>) -> (Vec<SensorFrame>, Vec<UnitQuaternion<f64>>) {
        let frames = (0..n)
            .map(|i| SensorFrame {
                t: i as f64 * dt,
                omega: Vec3::zeros(),
                accel: q.inverse() * Vec3::new(0.0, 0.0, -STANDARD_GRAVITY),
                mag: Vec3::new(22.0, 0.0, -42.0),
            })
            .collect();
        (frames, vec![q; n])
    }

    #[test]
    fn spool_examples() {
        assert_eq!(spool_to_length(0.0, 0.02, 2.0), 0.0);
        let l = spool_to_length(std::f64::consts::TAU, 0.02, 2.0);
        assert!((l - 0.0628).abs() < 1e-4);
        assert_eq!(spool_to_length(1.3, 0.02, 1.0), 2.0 * spool_to_length(1.3, 0.02, 2.0));
    }

    #[test]
    fn straight_growth_one_meter() {
        let cfg = DeadReckoningConfig::default();
        let (imu, q) = level_frames(101, 0.01, UnitQuaternion::identity());
        let step = 1.0 / 50.0;
        let dtheta = step * cfg.eversion_factor / cfg.r_spool_base;
        let encoder: Vec<_> = (0..=50)
            .map(|i| EncoderSample {
                t: i as f64 * 0.02,
                delta_theta: if i == 0 { 0.0 } else { dtheta },
            })
            .collect();
        let traj = dead_reckon(&encoder, &imu, &q, &cfg).unwrap();
        assert!((traj.endpoint().unwrap() - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_increments_hold_position() {
        let cfg = DeadReckoningConfig::default();
        let (imu, _) = level_frames(50, 0.01, UnitQuaternion::identity());
        let q: Vec<_> = (0..50)
            .map(|i| UnitQuaternion::from_euler_angles(0.1 * i as f64, 0.0, 0.05 * i as f64))
            .collect();
        let encoder: Vec<_> = (0..25).map(|i| EncoderSample { t: i as f64 * 0.02, delta_theta: 0.0 }).collect();
        for mode in [DeadReckoningMode::Heading, DeadReckoningMode::Velocity] {
            let traj = dead_reckon(&encoder, &imu, &q, &DeadReckoningConfig { mode, ..cfg }).unwrap();
            assert!(traj.samples.iter().all(|s| s.p == Vec3::zeros()));
        }
    }

    #[test]
    fn misaligned_streams_rejected() {
        let cfg = DeadReckoningConfig::default();
        let (imu, q) = level_frames(10, 0.01, UnitQuaternion::identity());
        let late = [EncoderSample { t: 5.0, delta_theta: 1.0 }];
        assert!(matches!(
            dead_reckon(&late, &imu, &q, &cfg),
            Err(LocalizationError::Misaligned(_))
        ));
        assert!(matches!(
            dead_reckon(&[], &imu, &q[..5], &cfg),
            Err(LocalizationError::Misaligned(_))
        ));
    }
}
