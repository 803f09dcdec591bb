//! Tip-steered soft growing ("vine") robot toolkit.
//!
//! The crate is split along the robot's subsystems:
//!
//! - [`kinematics`]: forward kinematics of the prismatic-spherical-spherical
//!   steering chain, the tendon-spool to joint-angle map and the reachable
//!   workspace.
//! - [`dynamics`]: force/torque balance of the tip section, blocked force and
//!   payload limits.
//! - [`localization`]: IMU orientation fusion and encoder dead reckoning.
//! - [`environment`]: pipe networks, centerlines and burrow reconstruction.
//! - [`simulator`]: quasi-static growth-and-steering simulation with
//!   synthetic sensors and scripted scenarios.
//! - [`protocol`]: operator command and telemetry wire formats.

pub mod dynamics;
pub mod environment;
pub mod geometry;
pub mod kinematics;
pub mod localization;
pub mod protocol;
pub mod simulator;

pub use geometry::{Polyline, Vec3};
pub use kinematics::{DeviceGeometry, HomogeneousTransform, RotationAngles, TendonState};

/// Standard gravity used throughout unless a config overrides it, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;
