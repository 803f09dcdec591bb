use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EnvironmentError;
use crate::geometry::{Polyline, Vec3};
use crate::localization::TrajectoryEstimate;

/// Ambient reading from the tip's environment sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSample {
    pub t: f64,
    /// °C
    pub temperature: f64,
    /// %RH
    pub humidity: f64,
}

/// Reconstructed burrow: tip track plus per-vertex environment overlay.
/// The overlay vectors are empty when no environment stream was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurrowProfile {
    pub trajectory: Polyline,
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurrowSummary {
    pub displacement: Vec3,
    pub vertical_rise: f64,
    /// `None` when the track has no horizontal extent.
    pub bending_angle_deg: Option<f64>,
    pub path_length: f64,
    pub mean_temperature: Option<f64>,
    pub mean_humidity: Option<f64>,
}

/// `atan2(|y|, |x|)` of a displacement, degrees.
pub fn bending_angle_xy(displacement: &Vec3) -> Result<f64, EnvironmentError> {
    if displacement.x == 0.0 && displacement.y == 0.0 {
        return Err(EnvironmentError::ZeroProjection);
    }
    Ok(displacement.y.abs().atan2(displacement.x.abs()).to_degrees())
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl BurrowProfile {
    pub fn summary(&self) -> BurrowSummary {
        let (first, last) = match (self.trajectory.first(), self.trajectory.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => (Vec3::zeros(), Vec3::zeros()),
        };
        let displacement = last - first;
        BurrowSummary {
            displacement,
            vertical_rise: displacement.z,
            bending_angle_deg: bending_angle_xy(&displacement).ok(),
            path_length: self.trajectory.length(),
            mean_temperature: mean(&self.temperature),
            mean_humidity: mean(&self.humidity),
        }
    }
}

fn interpolate(env: &[EnvironmentSample], t: f64) -> (f64, f64) {
    let i = env.partition_point(|e| e.t <= t);
    if i == 0 {
        return (env[0].temperature, env[0].humidity);
    }
    if i == env.len() {
        let e = env[env.len() - 1];
        return (e.temperature, e.humidity);
    }
    let (a, b) = (env[i - 1], env[i]);
    let w = (t - a.t) / (b.t - a.t);
    (
        a.temperature + w * (b.temperature - a.temperature),
        a.humidity + w * (b.humidity - a.humidity),
    )
}

/// Builds the burrow profile from a localized track and an environment
/// stream sampled on its own clock. Readings are linearly interpolated onto
/// the track times and held constant beyond the stream's ends.
pub fn reconstruct_burrow(
    trajectory: &TrajectoryEstimate,
    env: &[EnvironmentSample],
) -> Result<BurrowProfile, EnvironmentError> {
    let track = Polyline::new(trajectory.samples.iter().map(|s| s.p).collect());
    if env.is_empty() {
        return Ok(BurrowProfile {
            trajectory: track,
            temperature: Vec::new(),
            humidity: Vec::new(),
        });
    }
    if env.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(EnvironmentError::Misaligned("environment timestamps not increasing".into()));
    }
    if let Some(e) = env.iter().find(|e| !(0.0..=100.0).contains(&e.humidity)) {
        return Err(EnvironmentError::Misaligned(format!("humidity {} outside [0, 100]", e.humidity)));
    }
    if let (Some(first), Some(last)) = (trajectory.samples.first(), trajectory.samples.last()) {
        if env[0].t > last.t || env[env.len() - 1].t < first.t {
            return Err(EnvironmentError::Misaligned(
                "environment stream does not overlap the trajectory".into(),
            ));
        }
    }
    let (temperature, humidity) = trajectory
        .samples
        .iter()
        .map(|s| interpolate(env, s.t))
        .unzip();
    Ok(BurrowProfile {
        trajectory: track,
        temperature,
        humidity,
    })
}

/// Writes `s_m,x,y,z,temp_C,rh_pct`; environment columns are blank when absent.
pub fn write_burrow_csv<W: Write>(writer: W, profile: &BurrowProfile) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["s_m", "x", "y", "z", "temp_C", "rh_pct"])?;
    let mut s = 0.0;
    let pts = &profile.trajectory.points;
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            s += (p - pts[i - 1]).norm();
        }
        let env = |v: &Vec<f64>| v.get(i).map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            s.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.z.to_string(),
            env(&profile.temperature),
            env(&profile.humidity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::TrajectorySample;
    use nalgebra::UnitQuaternion;

    fn straight(end: Vec3, n: usize) -> TrajectoryEstimate {
        TrajectoryEstimate {
            samples: (0..=n)
                .map(|i| TrajectorySample {
                    t: i as f64,
                    p: end * (i as f64 / n as f64),
                    v: Vec3::zeros(),
                    q: UnitQuaternion::identity(),
                })
                .collect(),
        }
    }

    #[test]
    fn bending_angle_examples() {
        let a = bending_angle_xy(&Vec3::new(-0.425, 0.797, 0.073)).unwrap();
        assert!((a - 61.9).abs() < 0.1, "{a}");
        assert!((bending_angle_xy(&Vec3::new(1.0, 1.0, 0.0)).unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(bending_angle_xy(&Vec3::new(1.0, 0.0, 5.0)).unwrap(), 0.0);
        assert_eq!(bending_angle_xy(&Vec3::new(0.0, 0.0, 1.0)), Err(EnvironmentError::ZeroProjection));
    }

    #[test]
    fn constant_environment_summary() {
        let traj = straight(Vec3::new(-0.425, 0.797, 0.073), 10);
        let env: Vec<_> = (0..=20)
            .map(|i| EnvironmentSample {
                t: i as f64 * 0.5,
                temperature: 17.2,
                humidity: 39.4,
            })
            .collect();
        let profile = reconstruct_burrow(&traj, &env).unwrap();
        let s = profile.summary();
        assert!((s.mean_temperature.unwrap() - 17.2).abs() < 1e-12);
        assert!((s.mean_humidity.unwrap() - 39.4).abs() < 1e-12);
        assert!((s.vertical_rise - 0.073).abs() < 1e-12);
        assert!((s.bending_angle_deg.unwrap() - 61.9).abs() < 0.1);
    }

    #[test]
    fn empty_environment_is_geometry_only() {
        let traj = straight(Vec3::new(1.0, 0.0, 0.0), 4);
        let profile = reconstruct_burrow(&traj, &[]).unwrap();
        assert!(profile.temperature.is_empty());
        assert_eq!(profile.summary().mean_temperature, None);
        let mut buf = Vec::new();
        write_burrow_csv(&mut buf, &profile).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s_m,x,y,z,temp_C,rh_pct\n"));
        assert!(text.lines().nth(5).unwrap().starts_with("1,1,0,0,,"));
    }

    #[test]
    fn misaligned_environment_rejected() {
        let traj = straight(Vec3::new(1.0, 0.0, 0.0), 4);
        let late = [EnvironmentSample { t: 100.0, temperature: 1.0, humidity: 1.0 }];
        assert!(matches!(reconstruct_burrow(&traj, &late), Err(EnvironmentError::Misaligned(_))));
        let unordered = [
            EnvironmentSample { t: 1.0, temperature: 1.0, humidity: 1.0 },
            EnvironmentSample { t: 0.5, temperature: 1.0, humidity: 1.0 },
        ];
        assert!(reconstruct_burrow(&traj, &unordered).is_err());
    }
}
