//! Scenario runner behind the `vine` binary.
//!
//! Each subcommand runs one characterization or navigation scenario, writes
//! its data files plus `summary.json` and `manifest.json` into the output
//! directory, and reports whether every metric met its bound.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vine_core::dynamics::{BlockedForceConfig, DynamicsError};
use vine_core::environment::EnvironmentError;
use vine_core::kinematics::KinematicsError;
use vine_core::localization::LocalizationError;
use vine_core::simulator::{NoiseModel, SimConfig, SimError};
use vine_core::DeviceGeometry;
use vine_teleop::TeleopError;

pub mod analysis;
pub mod commands;
pub mod report;

pub use commands::{execute, Command};
pub use report::{Bound, Check, RunManifest, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Teleop(#[from] TeleopError),
}

/// Contents of the `--config` file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: DeviceGeometry,
    pub sim: SimConfig,
    /// Sensor noise for scenario runs; noiseless when absent.
    pub noise: Option<NoiseModel>,
    pub blocked_force: BlockedForceConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.geometry.validate()?;
        Ok(cfg)
    }
}

/// Settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}
