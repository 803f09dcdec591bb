//! Synthetic IMU and encoder streams generated from a ground-truth history.

use nalgebra::UnitQuaternion;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Vec3;
use crate::localization::{EncoderSample, SensorFrame};
use crate::STANDARD_GRAVITY;

/// Sensor imperfections. All zero (the default) gives exact readings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Constant gyro offset on every axis, rad/s.
    pub gyro_bias: f64,
    /// rad/s/√Hz
    pub gyro_sigma: f64,
    /// m/s²/√Hz
    pub accel_sigma: f64,
    /// µT per sample.
    pub mag_sigma: f64,
    /// Encoder resolution, rad. Zero reports the exact angle.
    pub encoder_quantization: f64,
}

impl NoiseModel {
    /// Defaults used by the Monte Carlo localization study.
    pub fn monte_carlo() -> Self {
        Self {
            gyro_bias: 0.002,
            gyro_sigma: 0.002,
            accel_sigma: 0.02,
            mag_sigma: 0.5,
            encoder_quantization: std::f64::consts::TAU / 1024.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("gyro_sigma", self.gyro_sigma),
            ("accel_sigma", self.accel_sigma),
            ("mag_sigma", self.mag_sigma),
            ("encoder_quantization", self.encoder_quantization),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.gyro_bias.is_finite() {
            return Err(SimError::InvalidConfig("gyro_bias must be finite".into()));
        }
        Ok(())
    }

    /// Per-sample standard deviations `(gyro, accel)` at `rate` Hz.
    pub fn per_sample_sigmas(&self, rate: f64) -> (f64, f64) {
        let k = rate.sqrt();
        (self.gyro_sigma * k, self.accel_sigma * k)
    }

    pub fn is_noiseless(&self) -> bool {
        *self == Self::default()
    }
}

/// Physical constants the sensors see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub gravity: f64,
    /// Earth field in the global frame, µT.
    pub mag_reference: Vec3,
    pub r_spool_base: f64,
    pub eversion_factor: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            gravity: STANDARD_GRAVITY,
            mag_reference: Vec3::new(22.0, 0.0, -42.0),
            r_spool_base: 0.02,
            eversion_factor: 2.0,
        }
    }
}

fn gaussian3<R: Rng>(rng: &mut R, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

/// IMU frames from a pose history sampled at `times`.
///
/// Angular rate is the backward difference `log(q_{k-1}⁻¹·q_k)/Δt`.
/// Acceleration is the backward second difference of position, with the
/// body assumed at rest before the first sample, minus gravity, expressed
/// in the body frame. The magnetometer sees the fixed reference field.
pub fn synth_imu<R: Rng>(
    times: &[f64],
    orientations: &[UnitQuaternion<f64>],
    positions: &[Vec3],
    noise: &NoiseModel,
    sensors: &SensorConfig,
    rng: &mut R,
) -> Result<Vec<SensorFrame>, SimError> {
    let n = times.len();
    if n < 2 {
        return Err(SimError::TooShort(n));
    }
    if orientations.len() != n || positions.len() != n {
        return Err(SimError::InvalidConfig(format!(
            "{n} times, {} orientations, {} positions",
            orientations.len(),
            positions.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::InvalidConfig("sample times must increase".into()));
    }
    noise.validate()?;
    let rate = (n - 1) as f64 / (times[n - 1] - times[0]);
    let (gyro_sigma, accel_sigma) = noise.per_sample_sigmas(rate);
    let gravity = Vec3::new(0.0, 0.0, sensors.gravity);
    let bias = Vec3::repeat(noise.gyro_bias);

    let mut frames = Vec::with_capacity(n);
    let mut v_prev = Vec3::zeros();
    for k in 0..n {
        let q = orientations[k];
        let (omega, accel_g) = if k == 0 {
            (Vec3::zeros(), Vec3::zeros())
        } else {
            let dt = times[k] - times[k - 1];
            let omega = if orientations[k - 1] == q {
                Vec3::zeros()
            } else {
                (orientations[k - 1].inverse() * q).scaled_axis() / dt
            };
            let v = (positions[k] - positions[k - 1]) / dt;
            let a = (v - v_prev) / dt;
            v_prev = v;
            (omega, a)
        };
        let inv = q.inverse();
        frames.push(SensorFrame {
            t: times[k],
            omega: omega + bias + gaussian3(rng, gyro_sigma),
            accel: inv * (accel_g - gravity) + gaussian3(rng, accel_sigma),
            mag: inv * sensors.mag_reference + gaussian3(rng, noise.mag_sigma),
        });
    }
    Ok(frames)
}

/// Base-spool encoder readings for the everted lengths at `times`.
///
/// The spool turns `factor/r` radians per meter of tip advance. The first
/// sample carries a zero increment.
pub fn synth_encoder(
    times: &[f64],
    lengths: &[f64],
    noise: &NoiseModel,
    sensors: &SensorConfig,
) -> Result<Vec<EncoderSample>, SimError> {
    if times.len() != lengths.len() {
        return Err(SimError::InvalidConfig("times and lengths differ in length".into()));
    }
    noise.validate()?;
    let scale = sensors.eversion_factor / sensors.r_spool_base;
    let q = noise.encoder_quantization;
    let read = |len: f64| {
        let angle = len * scale;
        if q > 0.0 {
            (angle / q).round() * q
        } else {
            angle
        }
    };
    let mut out = Vec::with_capacity(times.len());
    let mut prev = lengths.first().map(|&l| read(l));
    for (&t, &len) in times.iter().zip(lengths) {
        let now = read(len);
        out.push(EncoderSample {
            t,
            delta_theta: prev.map_or(0.0, |p| now - p),
        });
        prev = Some(now);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_times(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn stationary_history() {
        let n = 50;
        let times = uniform_times(n, 0.01);
        let q = UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3);
        let frames = synth_imu(
            &times,
            &vec![q; n],
            &vec![Vec3::new(1.0, 2.0, 3.0); n],
            &NoiseModel::default(),
            &SensorConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let g_body = q.inverse() * Vec3::new(0.0, 0.0, -STANDARD_GRAVITY);
        for f in &frames {
            assert_eq!(f.omega, Vec3::zeros());
            assert!((f.accel - g_body).norm() < 1e-12);
            assert!((f.mag - frames[0].mag).norm() < 1e-12);
        }
    }

    #[test]
    fn short_history_is_rejected() {
        let err = synth_imu(
            &[0.0],
            &[UnitQuaternion::identity()],
            &[Vec3::zeros()],
            &NoiseModel::default(),
            &SensorConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(err, Err(SimError::TooShort(1))));
    }

    #[test]
    fn encoder_increments_sum_to_growth() {
        let times = uniform_times(5, 0.02);
        let lengths = [0.1, 0.1004, 0.1008, 0.1012, 0.1016];
        let enc = synth_encoder(&times, &lengths, &NoiseModel::default(), &SensorConfig::default()).unwrap();
        assert_eq!(enc[0].delta_theta, 0.0);
        let total: f64 = enc.iter().map(|e| e.delta_theta).sum();
        assert!((total * 0.02 / 2.0 - 0.0016).abs() < 1e-15);
    }

    #[test]
    fn quantized_encoder_reports_whole_ticks() {
        let noise = NoiseModel {
            encoder_quantization: 0.01,
            ..Default::default()
        };
        let times = uniform_times(4, 0.02);
        let enc = synth_encoder(&times, &[0.0, 0.00011, 0.00034, 0.0005], &noise, &SensorConfig::default()).unwrap();
        for e in &enc {
            let ticks = e.delta_theta / 0.01;
            assert!((ticks - ticks.round()).abs() < 1e-9);
        }
    }
}
