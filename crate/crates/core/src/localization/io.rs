//! Sensor logs and trajectory files.
//!
//! - IMU CSV: `t,omega_x,omega_y,omega_z,a_x,a_y,a_z,m_x,m_y,m_z`
//! - encoder CSV: `t,delta_theta`
//! - trajectory: one JSON object per line, `{"t":…,"p":[x,y,z],"q":[w,x,y,z]}`

use std::io::{BufRead, Read, Write};

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{EncoderSample, LocalizationError, SensorFrame, TrajectoryEstimate, TrajectorySample};
use crate::geometry::Vec3;

#[derive(Serialize, Deserialize)]
struct ImuRecord {
    t: f64,
    omega_x: f64,
    omega_y: f64,
    omega_z: f64,
    a_x: f64,
    a_y: f64,
    a_z: f64,
    m_x: f64,
    m_y: f64,
    m_z: f64,
}

pub fn write_imu_csv<W: Write>(writer: W, frames: &[SensorFrame]) -> Result<(), LocalizationError> {
    let mut w = csv::Writer::from_writer(writer);
    for f in frames {
        w.serialize(ImuRecord {
            t: f.t,
            omega_x: f.omega.x,
            omega_y: f.omega.y,
            omega_z: f.omega.z,
            a_x: f.accel.x,
            a_y: f.accel.y,
            a_z: f.accel.z,
            m_x: f.mag.x,
            m_y: f.mag.y,
            m_z: f.mag.z,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu_csv<R: Read>(reader: R) -> Result<Vec<SensorFrame>, LocalizationError> {
    csv::Reader::from_reader(reader)
        .deserialize::<ImuRecord>()
        .map(|r| {
            let r = r?;
            Ok(SensorFrame {
                t: r.t,
                omega: Vec3::new(r.omega_x, r.omega_y, r.omega_z),
                accel: Vec3::new(r.a_x, r.a_y, r.a_z),
                mag: Vec3::new(r.m_x, r.m_y, r.m_z),
            })
        })
        .collect()
}

pub fn write_encoder_csv<W: Write>(writer: W, samples: &[EncoderSample]) -> Result<(), LocalizationError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_encoder_csv<R: Read>(reader: R) -> Result<Vec<EncoderSample>, LocalizationError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(LocalizationError::from))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    t: f64,
    p: [f64; 3],
    q: [f64; 4],
}

pub fn write_trajectory_ndjson<W: Write>(mut writer: W, traj: &TrajectoryEstimate) -> Result<(), LocalizationError> {
    for s in &traj.samples {
        let q = s.q.quaternion();
        let rec = TrajectoryRecord {
            t: s.t,
            p: [s.p.x, s.p.y, s.p.z],
            q: [q.w, q.i, q.j, q.k],
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a trajectory file. Velocities are not stored and come back as zero.
pub fn read_trajectory_ndjson<R: BufRead>(reader: R) -> Result<TrajectoryEstimate, LocalizationError> {
    let mut samples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line)?;
        let [w, x, y, z] = rec.q;
        samples.push(TrajectorySample {
            t: rec.t,
            p: Vec3::from(rec.p),
            v: Vec3::zeros(),
            q: UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
        });
    }
    Ok(TrajectoryEstimate { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imu_round_trip_and_header() {
        let frames = vec![SensorFrame {
            t: 0.01,
            omega: Vec3::new(0.1, -0.2, 0.3),
            accel: Vec3::new(0.0, 0.5, -9.81),
            mag: Vec3::new(22.0, 0.0, -42.0),
        }];
        let mut buf = Vec::new();
        write_imu_csv(&mut buf, &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,omega_x,omega_y,omega_z,a_x,a_y,a_z,m_x,m_y,m_z\n"));
        assert_eq!(read_imu_csv(&buf[..]).unwrap(), frames);
    }

    #[test]
    fn encoder_round_trip_and_header() {
        let samples = vec![
            EncoderSample { t: 0.0, delta_theta: 0.0 },
            EncoderSample { t: 0.02, delta_theta: 0.125 },
        ];
        let mut buf = Vec::new();
        write_encoder_csv(&mut buf, &samples).unwrap();
        assert!(buf.starts_with(b"t,delta_theta\n"));
        assert_eq!(read_encoder_csv(&buf[..]).unwrap(), samples);
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = TrajectoryEstimate {
            samples: vec![TrajectorySample {
                t: 1.5,
                p: Vec3::new(0.1, 0.2, 0.3),
                v: Vec3::zeros(),
                q: UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            }],
        };
        let mut buf = Vec::new();
        write_trajectory_ndjson(&mut buf, &traj).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.starts_with("{\"t\":1.5,\"p\":[0.1,0.2,0.3],\"q\":["));
        let back = read_trajectory_ndjson(&buf[..]).unwrap();
        assert_eq!(back.samples[0].p, traj.samples[0].p);
        assert!(back.samples[0].q.angle_to(&traj.samples[0].q) < 1e-12);
    }
}
