//! Tip localization: IMU orientation fusion, encoder odometry and dead
//! reckoning into a global-frame track, plus tracking-error statistics.
//!
//! The global frame is z-up. Orientations map body vectors to global ones.
//! Accelerometer readings include gravity as a downward acceleration, so a
//! level tip at rest reads `(0, 0, −g)`.

mod dead_reckoning;
mod fusion;
pub mod io;
mod pipeline;
mod tracking;

pub use dead_reckoning::{
    dead_reckon, orientation_at, spool_to_length, DeadReckoningConfig, DeadReckoningMode,
    HeadingIntegrator,
};
pub use fusion::{body_to_global, fuse_orientation, triad, ComplementaryFilter, FusionConfig};
pub use pipeline::{LocalizationPipeline, PipelineInput, Snapshot};
pub use tracking::{tracking_error, NearestSegmentIndex, TrackingErrorReport};

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("timestamps not strictly increasing at sample {index}")]
    NonMonotonic { index: usize },
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("streams are misaligned: {0}")]
    Misaligned(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pipeline worker stopped")]
    Disconnected,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One IMU reading in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t: f64,
    /// rad/s
    pub omega: Vec3,
    /// m/s², gravity included.
    pub accel: Vec3,
    /// µT
    pub mag: Vec3,
}

/// Base-spool rotation since the previous sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSample {
    pub t: f64,
    pub delta_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub q: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub samples: Vec<TrajectorySample>,
}

impl TrajectoryEstimate {
    pub fn positions(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.p).collect()
    }

    pub fn path_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].p - w[0].p).norm()).fold(0.0, |acc, d| acc + d)
    }

    pub fn endpoint(&self) -> Option<Vec3> {
        self.samples.last().map(|s| s.p)
    }
}

pub(crate) fn check_monotonic<T>(items: &[T], t: impl Fn(&T) -> f64) -> Result<(), LocalizationError> {
    for (i, w) in items.windows(2).enumerate() {
        if !(t(&w[1]) > t(&w[0])) {
            return Err(LocalizationError::NonMonotonic { index: i + 1 });
        }
    }
    Ok(())
}
