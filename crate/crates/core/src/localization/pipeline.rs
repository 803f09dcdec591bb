use std::sync::Arc;
use std::thread::JoinHandle;

use arc_swap::ArcSwap;
use crossbeam_channel::{Receiver, Sender};
use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use super::dead_reckoning::{spool_to_length, DeadReckoningConfig, HeadingIntegrator};
use super::fusion::{ComplementaryFilter, FusionConfig};
use super::{EncoderSample, LocalizationError, SensorFrame, TrajectoryEstimate, TrajectorySample};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PipelineInput {
    Imu(SensorFrame),
    Encoder(EncoderSample),
}

/// Latest estimate published by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub path_length: f64,
    pub encoder_samples: usize,
}

impl Default for Snapshot {
    fn default() -> Self {
        Self {
            t: 0.0,
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
            path_length: 0.0,
            encoder_samples: 0,
        }
    }
}

/// Streaming heading-mode localizer running on its own thread.
///
/// Producers push samples through [`LocalizationPipeline::sender`] in time
/// order (an IMU frame before any encoder sample at the same or a later
/// time). Readers call [`LocalizationPipeline::latest`] without blocking the
/// worker. Dropping every sender, or calling [`LocalizationPipeline::finish`],
/// ends the stream and returns the full track.
pub struct LocalizationPipeline {
    tx: Option<Sender<PipelineInput>>,
    snapshot: Arc<ArcSwap<Snapshot>>,
    worker: Option<JoinHandle<Result<TrajectoryEstimate, LocalizationError>>>,
}

struct Worker {
    filter: ComplementaryFilter,
    dr: DeadReckoningConfig,
    integrator: HeadingIntegrator,
    prev_imu: Option<(f64, UnitQuaternion<f64>)>,
    last_imu: Option<(f64, UnitQuaternion<f64>)>,
    last_encoder_t: Option<f64>,
    track: Vec<TrajectorySample>,
}

impl Worker {
    fn orientation_at(&self, t: f64) -> Result<UnitQuaternion<f64>, LocalizationError> {
        let Some((t1, q1)) = self.last_imu else {
            return Err(LocalizationError::Misaligned("encoder sample before any IMU frame".into()));
        };
        if t >= t1 {
            return Ok(q1);
        }
        match self.prev_imu {
            Some((t0, q0)) if t > t0 => {
                let w = (t - t0) / (t1 - t0);
                Ok(q0.try_slerp(&q1, w, 1e-12).unwrap_or(q0))
            }
            Some((t0, q0)) if t == t0 => Ok(q0),
            _ => Err(LocalizationError::Misaligned(format!("encoder time {t} precedes IMU history"))),
        }
    }

    fn handle(&mut self, input: PipelineInput, snapshot: &ArcSwap<Snapshot>) -> Result<(), LocalizationError> {
        match input {
            PipelineInput::Imu(frame) => {
                let q = self.filter.update(&frame)?;
                self.prev_imu = self.last_imu;
                self.last_imu = Some((frame.t, q));
            }
            PipelineInput::Encoder(e) => {
                if let Some(t0) = self.last_encoder_t {
                    if !(e.t > t0) {
                        return Err(LocalizationError::NonMonotonic { index: self.track.len() });
                    }
                }
                let q = self.orientation_at(e.t)?;
                let dl = spool_to_length(e.delta_theta, self.dr.r_spool_base, self.dr.eversion_factor);
                let (p, v) = self.integrator.advance(e.t, q, dl);
                self.last_encoder_t = Some(e.t);
                self.track.push(TrajectorySample { t: e.t, p, v, q });
                snapshot.store(Arc::new(Snapshot {
                    t: e.t,
                    position: p,
                    orientation: q,
                    path_length: self.integrator.path_length(),
                    encoder_samples: self.track.len(),
                }));
            }
        }
        Ok(())
    }
}

fn run(
    rx: Receiver<PipelineInput>,
    mut worker: Worker,
    snapshot: Arc<ArcSwap<Snapshot>>,
) -> Result<TrajectoryEstimate, LocalizationError> {
    for input in rx {
        worker.handle(input, &snapshot)?;
    }
    Ok(TrajectoryEstimate { samples: worker.track })
}

impl LocalizationPipeline {
    pub fn spawn(fusion: FusionConfig, dr: DeadReckoningConfig) -> Result<Self, LocalizationError> {
        dr.validate()?;
        let filter = ComplementaryFilter::new(fusion)?;
        let (tx, rx) = crossbeam_channel::unbounded();
        let snapshot = Arc::new(ArcSwap::from_pointee(Snapshot {
            position: dr.origin,
            ..Default::default()
        }));
        let worker = Worker {
            filter,
            dr,
            integrator: HeadingIntegrator::new(dr.origin),
            prev_imu: None,
            last_imu: None,
            last_encoder_t: None,
            track: Vec::new(),
        };
        let shared = Arc::clone(&snapshot);
        let handle = std::thread::Builder::new()
            .name("localization".into())
            .spawn(move || run(rx, worker, shared))?;
        Ok(Self {
            tx: Some(tx),
            snapshot,
            worker: Some(handle),
        })
    }

    /// A producer handle; clones may be moved to other threads.
    pub fn sender(&self) -> Sender<PipelineInput> {
        self.tx.as_ref().expect("pipeline already finished").clone()
    }

    pub fn push(&self, input: PipelineInput) -> Result<(), LocalizationError> {
        self.tx
            .as_ref()
            .ok_or(LocalizationError::Disconnected)?
            .send(input)
            .map_err(|_| LocalizationError::Disconnected)
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }

    /// Closes this handle's sender and waits for the worker. Other sender
    /// clones must be dropped for this to return.
    pub fn finish(mut self) -> Result<TrajectoryEstimate, LocalizationError> {
        self.tx.take();
        let handle = self.worker.take().ok_or(LocalizationError::Disconnected)?;
        handle.join().map_err(|_| LocalizationError::Disconnected)?
    }
}

impl Drop for LocalizationPipeline {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(handle) = self.worker.take() {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{dead_reckon, fuse_orientation};
    use crate::STANDARD_GRAVITY;

    fn streams() -> (Vec<SensorFrame>, Vec<EncoderSample>) {
        let mut imu = Vec::new();
        let mut enc = Vec::new();
        for i in 0..400 {
            let t = i as f64 * 0.01;
            let yaw = 0.2 * t;
            let q = UnitQuaternion::from_euler_angles(0.0, -0.3, yaw);
            imu.push(SensorFrame {
                t,
                omega: Vec3::new(0.0, 0.0, 0.2),
                accel: q.inverse() * Vec3::new(0.0, 0.0, -STANDARD_GRAVITY),
                mag: q.inverse() * Vec3::new(22.0, 0.0, -42.0),
            });
            if i % 2 == 0 {
                enc.push(EncoderSample { t, delta_theta: if i == 0 { 0.0 } else { 0.04 } });
            }
        }
        (imu, enc)
    }

    #[test]
    fn streaming_matches_batch() {
        let (imu, enc) = streams();
        let fusion = FusionConfig::default();
        let dr = DeadReckoningConfig::default();
        let q = fuse_orientation(&imu, &fusion).unwrap();
        let batch = dead_reckon(&enc, &imu, &q, &dr).unwrap();

        let pipeline = LocalizationPipeline::spawn(fusion, dr).unwrap();
        let mut e = enc.iter().peekable();
        for f in &imu {
            pipeline.push(PipelineInput::Imu(*f)).unwrap();
            while let Some(s) = e.next_if(|s| s.t <= f.t) {
                pipeline.push(PipelineInput::Encoder(*s)).unwrap();
            }
        }
        let streamed = pipeline.finish().unwrap();
        assert_eq!(streamed.samples.len(), batch.samples.len());
        for (a, b) in streamed.samples.iter().zip(&batch.samples) {
            assert!((a.p - b.p).norm() < 1e-12);
        }
    }

    #[test]
    fn snapshot_tracks_latest_sample() {
        let (imu, enc) = streams();
        let pipeline = LocalizationPipeline::spawn(FusionConfig::default(), DeadReckoningConfig::default()).unwrap();
        let producer = pipeline.sender();
        let feeder = std::thread::spawn(move || {
            let mut e = enc.iter().peekable();
            for f in &imu {
                producer.send(PipelineInput::Imu(*f)).unwrap();
                while let Some(s) = e.next_if(|s| s.t <= f.t) {
                    producer.send(PipelineInput::Encoder(*s)).unwrap();
                }
            }
        });
        feeder.join().unwrap();
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(5);
        while pipeline.latest().encoder_samples < 200 {
            assert!(std::time::Instant::now() < deadline, "worker stalled");
            std::thread::yield_now();
        }
        let latest = pipeline.latest();
        let track = pipeline.finish().unwrap();
        assert_eq!(track.samples.len(), 200);
        assert_eq!(latest.position, track.endpoint().unwrap());
    }

    #[test]
    fn encoder_before_imu_is_an_error() {
        let pipeline = LocalizationPipeline::spawn(FusionConfig::default(), DeadReckoningConfig::default()).unwrap();
        pipeline
            .push(PipelineInput::Encoder(EncoderSample { t: 0.0, delta_theta: 1.0 }))
            .unwrap();
        assert!(matches!(pipeline.finish(), Err(LocalizationError::Misaligned(_))));
    }
}
