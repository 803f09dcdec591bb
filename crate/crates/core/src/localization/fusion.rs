use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{check_monotonic, LocalizationError, SensorFrame};
use crate::geometry::Vec3;
use crate::STANDARD_GRAVITY;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Complementary filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Fraction of the accelerometer/magnetometer error removed per sample.
    pub gain: f64,
    pub gravity: f64,
    /// Earth field in the global frame, µT.
    pub mag_reference: Vec3,
    /// Tilt correction is suspended while `|ω|` exceeds this, rad/s.
    pub gyro_gate: f64,
    /// ... or while `||a| − g|`, or the change of `a` since the previous
    /// sample, exceeds this, m/s².
    pub accel_gate: f64,
    /// Quiet samples required before tilt correction resumes.
    pub holdoff: usize,
    /// Starting attitude; solved from the first sample when absent.
    pub initial: Option<UnitQuaternion<f64>>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            gain: 0.02,
            gravity: STANDARD_GRAVITY,
            mag_reference: Vec3::new(22.0, 0.0, -42.0),
            gyro_gate: 0.05,
            accel_gate: 0.1,
            holdoff: 10,
            initial: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), LocalizationError> {
        if !(0.0..=1.0).contains(&self.gain) {
            return Err(LocalizationError::InvalidConfig(format!("gain {} outside [0, 1]", self.gain)));
        }
        if !(self.gravity > 0.0) {
            return Err(LocalizationError::InvalidConfig("gravity must be positive".into()));
        }
        if self.mag_reference.xy().norm() == 0.0 {
            return Err(LocalizationError::InvalidConfig(
                "magnetic reference needs a horizontal component".into(),
            ));
        }
        Ok(())
    }

    /// Widens the quasi-static gates so that white sensor noise of the given
    /// per-sample standard deviations rarely trips them.
    pub fn with_noise_gates(mut self, gyro_sample_sigma: f64, accel_sample_sigma: f64) -> Self {
        self.gyro_gate = self.gyro_gate.max(4.0 * gyro_sample_sigma);
        self.accel_gate = self.accel_gate.max(6.0 * accel_sample_sigma);
        self
    }
}

/// TRIAD attitude from one accelerometer and magnetometer reading.
pub fn triad(accel: &Vec3, mag: &Vec3, mag_reference: &Vec3) -> Option<UnitQuaternion<f64>> {
    let up_b = -accel.try_normalize(1e-12)?;
    let east_b = up_b.cross(mag).try_normalize(1e-12)?;
    let north_b = east_b.cross(&up_b);
    let up_g = Vec3::z();
    let east_g = up_g.cross(mag_reference).try_normalize(1e-12)?;
    let north_g = east_g.cross(&up_g);
    let body = Matrix3::from_columns(&[up_b, east_b, north_b]);
    let global = Matrix3::from_columns(&[up_g, east_g, north_g]);
    let r = Rotation3::from_matrix(&(global * body.transpose()));
    Some(UnitQuaternion::from_rotation_matrix(&r))
}

/// Global-frame linear acceleration with gravity removed:
/// `R(q)·a_B + (0, 0, g)`.
pub fn body_to_global(accel: &Vec3, q: &Quaternion<f64>, g: f64) -> Result<Vec3, LocalizationError> {
    let norm = q.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(LocalizationError::NonUnitQuaternion(norm));
    }
    let uq = UnitQuaternion::new_unchecked(*q);
    Ok(uq * accel + Vec3::new(0.0, 0.0, g))
}

/// Quaternion complementary filter: gyro integration, pulled toward the
/// accelerometer's gravity direction while quasi-static and toward the
/// magnetometer's heading always.
#[derive(Debug, Clone)]
pub struct ComplementaryFilter {
    cfg: FusionConfig,
    q: Option<UnitQuaternion<f64>>,
    last_t: Option<f64>,
    last_accel: Option<Vec3>,
    quiet: usize,
}

impl ComplementaryFilter {
    pub fn new(cfg: FusionConfig) -> Result<Self, LocalizationError> {
        cfg.validate()?;
        Ok(Self {
            q: cfg.initial,
            cfg,
            last_t: None,
            last_accel: None,
            quiet: 0,
        })
    }

    pub fn orientation(&self) -> Option<UnitQuaternion<f64>> {
        self.q
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn update(&mut self, frame: &SensorFrame) -> Result<UnitQuaternion<f64>, LocalizationError> {
        if let Some(t0) = self.last_t {
            if !(frame.t > t0) {
                return Err(LocalizationError::NonMonotonic { index: 0 });
            }
        }
        let mut q = match (self.q, self.last_t) {
            (Some(q), Some(t0)) => q * UnitQuaternion::from_scaled_axis(frame.omega * (frame.t - t0)),
            (Some(q), None) => q,
            (None, _) => triad(&frame.accel, &frame.mag, &self.cfg.mag_reference)
                .unwrap_or_else(UnitQuaternion::identity),
        };
        self.last_t = Some(frame.t);

        // a jump in a can keep its magnitude near g, so the change is gated too
        let steady = self
            .last_accel
            .is_none_or(|prev| (frame.accel - prev).norm() < self.cfg.accel_gate);
        self.last_accel = Some(frame.accel);
        let quasi_static = frame.omega.norm() < self.cfg.gyro_gate
            && (frame.accel.norm() - self.cfg.gravity).abs() < self.cfg.accel_gate
            && steady;
        self.quiet = if quasi_static { self.quiet + 1 } else { 0 };

        let gain = self.cfg.gain;
        if gain > 0.0 && self.quiet > self.cfg.holdoff {
            if let Some(down) = (q * frame.accel).try_normalize(1e-12) {
                if let Some(fix) = UnitQuaternion::rotation_between(&down, &-Vec3::z()) {
                    q = fix.powf(gain) * q;
                }
            }
        }
        if gain > 0.0 {
            let est = (q * frame.mag).xy();
            let reference = self.cfg.mag_reference.xy();
            if est.norm() > 1e-12 {
                let err = (est.x * reference.y - est.y * reference.x).atan2(est.dot(&reference));
                q = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(Vec3::z()), gain * err) * q;
            }
        }
        let q = UnitQuaternion::new_normalize(q.into_inner());
        self.q = Some(q);
        Ok(q)
    }
}

/// Runs the filter over a whole stream.
pub fn fuse_orientation(
    stream: &[SensorFrame],
    cfg: &FusionConfig,
) -> Result<Vec<UnitQuaternion<f64>>, LocalizationError> {
    check_monotonic(stream, |f| f.t)?;
    let mut filter = ComplementaryFilter::new(*cfg)?;
    stream.iter().map(|f| filter.update(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const G: f64 = STANDARD_GRAVITY;

    fn frame_for(q: &UnitQuaternion<f64>, t: f64, omega: Vec3) -> SensorFrame {
        let cfg = FusionConfig::default();
        SensorFrame {
            t,
            omega,
            accel: q.inverse() * Vec3::new(0.0, 0.0, -G),
            mag: q.inverse() * cfg.mag_reference,
        }
    }

    #[test]
    fn body_to_global_examples() {
        let id = UnitQuaternion::identity();
        let r = body_to_global(&Vec3::new(0.0, 0.0, -G), id.quaternion(), G).unwrap();
        assert_eq!(r, Vec3::zeros());
        let pitch = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), -FRAC_PI_2);
        let r = body_to_global(&Vec3::new(-G, 0.0, 0.0), pitch.quaternion(), G).unwrap();
        assert!(r.norm() < 1e-12);
        let r = body_to_global(&Vec3::new(1.0, 0.0, -G), id.quaternion(), G).unwrap();
        assert!((r - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let bad = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            body_to_global(&Vec3::zeros(), &bad, G),
            Err(LocalizationError::NonUnitQuaternion(_))
        ));
    }

    #[test]
    fn triad_recovers_attitude() {
        let q = UnitQuaternion::from_euler_angles(0.3, -0.4, 1.2);
        let f = frame_for(&q, 0.0, Vec3::zeros());
        let est = triad(&f.accel, &f.mag, &FusionConfig::default().mag_reference).unwrap();
        assert!(est.angle_to(&q) < 1e-12);
    }

    #[test]
    fn stationary_holds_identity() {
        let id = UnitQuaternion::identity();
        let stream: Vec<_> = (0..6000).map(|i| frame_for(&id, i as f64 * 0.01, Vec3::zeros())).collect();
        let out = fuse_orientation(&stream, &FusionConfig::default()).unwrap();
        for q in &out {
            assert!(q.angle().to_degrees() < 0.1);
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn yaw_rate_integrates() {
        let rate = 0.1;
        let stream: Vec<_> = (0..=1000)
            .map(|i| {
                let t = i as f64 * 0.01;
                let q = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), rate * t);
                frame_for(&q, t, Vec3::new(0.0, 0.0, rate))
            })
            .collect();
        let cfg = FusionConfig {
            initial: Some(UnitQuaternion::identity()),
            ..Default::default()
        };
        let out = fuse_orientation(&stream, &cfg).unwrap();
        let (_, _, yaw) = out.last().unwrap().euler_angles();
        assert!((yaw - 1.0).abs() < 0.01, "{yaw}");
    }

    #[test]
    fn correction_bounds_bias_drift() {
        let id = UnitQuaternion::identity();
        let bias = Vec3::new(0.01, 0.0, 0.0);
        let stream: Vec<_> = (0..6000).map(|i| frame_for(&id, i as f64 * 0.01, bias)).collect();
        let tilt = |q: &UnitQuaternion<f64>| (q * Vec3::z()).angle(&Vec3::z()).to_degrees();
        let with = fuse_orientation(&stream, &FusionConfig::default()).unwrap();
        let without = fuse_orientation(&stream, &FusionConfig { gain: 0.0, ..Default::default() }).unwrap();
        assert!(with.iter().all(|q| tilt(q) < 2.0));
        assert!(tilt(without.last().unwrap()) > 30.0);
    }

    #[test]
    fn rejects_non_monotone_stream() {
        let id = UnitQuaternion::identity();
        let stream = [frame_for(&id, 1.0, Vec3::zeros()), frame_for(&id, 0.5, Vec3::zeros())];
        assert!(matches!(
            fuse_orientation(&stream, &FusionConfig::default()),
            Err(LocalizationError::NonMonotonic { index: 1 })
        ));
    }
}
