//! Teleoperation service.
//!
//! Operators connect over TCP and send `motor,pwm,duration` lines. The server
//! answers each line with an `ack` or `error` frame and broadcasts `telemetry`
//! frames to every client at a fixed rate; all frames are one JSON object per
//! line. A connection that opens with an HTTP `GET` is upgraded to a
//! WebSocket and carries the same lines as text messages, which is what a
//! browser cockpit uses.
//!
//! Commands from all clients are numbered under one lock and queued FIFO to
//! the single simulator thread, so sequence numbers follow arrival order.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vine_core::environment::EnvironmentError;
use vine_core::simulator::{SimConfig, SimError};

mod client;
mod server;
mod session;
mod sim_loop;

pub use client::Client;
pub use server::{serve, AppliedCommand, ServerHandle};

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed scenario file: {0}")]
    Scenario(#[from] serde_json::Error),
}

/// Session settings. A scenario file is this structure as JSON; missing
/// fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeleopConfig {
    pub bind: String,
    pub telemetry_hz: f64,
    pub preset: String,
    pub seed: u64,
    /// Body already everted into the entry pipe at start, m.
    pub initial_length: f64,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    pub sim: SimConfig,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.to_string(),
            telemetry_hz: 10.0,
            preset: "pipe3d-45".to_string(),
            seed: 0,
            initial_length: 0.0,
            time_scale: 1.0,
            sim: SimConfig::default(),
        }
    }
}

impl TeleopConfig {
    pub fn validate(&self) -> Result<(), TeleopError> {
        if !(self.telemetry_hz > 0.0 && self.telemetry_hz <= 1000.0) {
            return Err(TeleopError::InvalidConfig(format!(
                "telemetry_hz must lie in (0, 1000], got {}",
                self.telemetry_hz
            )));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(TeleopError::InvalidConfig("time_scale must be positive".into()));
        }
        self.sim.validate()?;
        Ok(())
    }

    pub fn from_scenario_file(path: &Path) -> Result<Self, TeleopError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
