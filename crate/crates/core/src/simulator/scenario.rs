//! Scripted runs over the built-in courses.
//!
//! Each preset comes with a default command script:
//!
//! - `pipe3d-45`: grow through the whole course.
//! - `branch2d-7`: at every junction, stop 1 cm short, steer right with
//!   motor 1 for 7 s, creep through at 20 % growth for 10 s, release for 8 s
//!   and grow on to the next junction. The `null` variant only grows.
//! - `climb45`: starts 1 cm short of the junction; pressure is dropped,
//!   the legs brace at 10 s, motor 2 steers up from 20 s, the body is
//!   pressurised to 5.5 kPa and grown at 79 s, the legs retract at 80 s and
//!   the tendon is released at 81 s. The `unbraced` variant omits bracing.
//! - `burrow-field`: grow to the end while logging a constant environment.

use nalgebra::UnitQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sensors::{synth_encoder, synth_imu, NoiseModel, SensorConfig};
use super::{MotorCommand, RobotState, SimConfig, SimError, Simulator, BRACE_MOTOR, GROWTH_MOTOR};
use crate::environment::{
    centerline, presets, EnvironmentError, EnvironmentSample, PipeNetwork, Route,
};
use crate::geometry::{Polyline, Vec3};
use crate::localization::{
    dead_reckon, fuse_orientation, tracking_error, DeadReckoningConfig, DeadReckoningMode, EncoderSample,
    FusionConfig, SensorFrame, TrackingErrorReport, TrajectoryEstimate,
};

/// Distance short of a junction at which scripted growth pauses, m.
const APPROACH_GAP: f64 = 0.01;
const ENVIRONMENT_RATE: f64 = 10.0;

/// A timed action in a scenario script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleEntry {
    Motor {
        t_start: f64,
        motor: usize,
        duty: f64,
        duration: f64,
    },
    Pressure {
        t_start: f64,
        pressure_kpa: f64,
    },
}

impl ScheduleEntry {
    pub fn t_start(&self) -> f64 {
        match self {
            ScheduleEntry::Motor { t_start, .. } | ScheduleEntry::Pressure { t_start, .. } => *t_start,
        }
    }

    pub fn end(&self) -> f64 {
        match self {
            ScheduleEntry::Motor { t_start, duration, .. } => t_start + duration,
            ScheduleEntry::Pressure { t_start, .. } => *t_start,
        }
    }

    fn motor(t_start: f64, motor: usize, duty: f64, duration: f64) -> Self {
        ScheduleEntry::Motor {
            t_start,
            motor,
            duty,
            duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptVariant {
    #[default]
    Default,
    /// No steering at all.
    Null,
    /// The climb without the bracing legs.
    Unbraced,
}

/// Default script of a preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub schedule: Vec<ScheduleEntry>,
    pub duration: f64,
    /// Body already grown into the entry pipe at t = 0, m.
    pub initial_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub preset: String,
    pub seed: u64,
    pub noise: NoiseModel,
    /// Replaces the preset's default script when present.
    pub schedule: Option<Vec<ScheduleEntry>>,
    pub variant: ScriptVariant,
    /// Simulated time, s. Defaults to the script's own length.
    pub duration: Option<f64>,
    pub sim: SimConfig,
    /// Earth field in the global frame, µT.
    pub mag_reference: Vec3,
    /// Encoder samples once every this many steps.
    pub encoder_decimation: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            preset: "pipe3d-45".into(),
            seed: 0,
            noise: NoiseModel::default(),
            schedule: None,
            variant: ScriptVariant::Default,
            duration: None,
            sim: SimConfig::default(),
            mag_reference: SensorConfig::default().mag_reference,
            encoder_decimation: 2,
        }
    }
}

impl ScenarioConfig {
    pub fn new(preset: &str, seed: u64) -> Self {
        Self {
            preset: preset.into(),
            seed,
            ..Default::default()
        }
    }

    pub fn sensors(&self) -> SensorConfig {
        SensorConfig {
            gravity: self.sim.gravity,
            mag_reference: self.mag_reference,
            r_spool_base: self.sim.geometry.r_spool_base,
            eversion_factor: 2.0,
        }
    }
}

fn grow_time(distance: f64, sim: &SimConfig, duty: f64) -> f64 {
    distance / (sim.growth_speed * duty / 100.0)
}

/// Builds the default script of `preset`.
pub fn default_script(preset: &str, variant: ScriptVariant, sim: &SimConfig) -> Result<Script, SimError> {
    let network = presets::by_name(preset)?;
    match preset {
        "pipe3d-45" | "burrow-field" => {
            let length = centerline(&network, &[])?.length();
            let start = 0.5;
            let grow = grow_time(length, sim, 100.0) + 0.5;
            Ok(Script {
                schedule: vec![ScheduleEntry::motor(start, GROWTH_MOTOR, 100.0, grow)],
                duration: start + grow + 1.0,
                initial_length: 0.0,
            })
        }
        "branch2d-7" => Ok(branch_script(&network, variant, sim)?),
        "climb45" => Ok(climb_script(&network, variant, sim)?),
        other => Err(EnvironmentError::UnknownPreset(other.to_string()).into()),
    }
}

fn branch_script(network: &PipeNetwork, variant: ScriptVariant, sim: &SimConfig) -> Result<Script, SimError> {
    let right = vec![1; network.junctions.len()];
    let route = centerline(network, &right)?;
    if variant == ScriptVariant::Null {
        let straight = centerline(network, &[0])?.length();
        let grow = grow_time(straight, sim, 100.0) + 1.0;
        return Ok(Script {
            schedule: vec![ScheduleEntry::motor(0.0, GROWTH_MOTOR, 100.0, grow)],
            duration: grow + 1.0,
            initial_length: 0.0,
        });
    }
    let (steer, creep_duty, creep, release) = (7.0, 20.0, 10.0, 8.0);
    let creep_distance = sim.growth_speed * creep_duty / 100.0 * creep;
    let mut schedule = Vec::new();
    let mut t = 0.0;
    let mut s = 0.0;
    for j in route.junctions() {
        let approach = j.s - APPROACH_GAP - s;
        let grow = grow_time(approach, sim, 100.0);
        schedule.push(ScheduleEntry::motor(t, GROWTH_MOTOR, 100.0, grow));
        t += grow;
        schedule.push(ScheduleEntry::motor(t, 1, 100.0, steer));
        t += steer;
        schedule.push(ScheduleEntry::motor(t, GROWTH_MOTOR, creep_duty, creep));
        t += creep;
        schedule.push(ScheduleEntry::motor(t, 1, -100.0, release));
        t += release;
        s = j.s - APPROACH_GAP + creep_distance;
    }
    let grow = grow_time(route.length() - s, sim, 100.0) + 0.5;
    schedule.push(ScheduleEntry::motor(t, GROWTH_MOTOR, 100.0, grow));
    Ok(Script {
        schedule,
        duration: t + grow + 1.0,
        initial_length: 0.0,
    })
}

fn climb_script(network: &PipeNetwork, variant: ScriptVariant, sim: &SimConfig) -> Result<Script, SimError> {
    let entry = network.entry_segment().length();
    let mut schedule = vec![
        ScheduleEntry::Pressure {
            t_start: 1.0,
            pressure_kpa: 0.0,
        },
        ScheduleEntry::motor(10.0, BRACE_MOTOR, 100.0, 1.0),
        ScheduleEntry::motor(20.0, 2, 50.0, 13.0),
        ScheduleEntry::Pressure {
            t_start: 79.0,
            pressure_kpa: 5.5,
        },
        ScheduleEntry::motor(79.0, GROWTH_MOTOR, 100.0, grow_time(0.1, sim, 100.0)),
        ScheduleEntry::motor(80.0, BRACE_MOTOR, -100.0, 1.0),
        ScheduleEntry::motor(81.0, 2, -50.0, 13.0),
    ];
    if variant == ScriptVariant::Unbraced {
        schedule.retain(|e| !matches!(e, ScheduleEntry::Motor { motor: BRACE_MOTOR, .. }));
    }
    Ok(Script {
        schedule,
        duration: 100.0,
        initial_length: entry - APPROACH_GAP,
    })
}

/// One line of the state trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub t: f64,
    pub route_position: f64,
    pub everted_length: f64,
    pub tip: [f64; 3],
    /// `[w, x, y, z]`
    pub orientation: [f64; 4],
    /// Active joint `[θ, β, γ]`, rad.
    pub joint: [f64; 3],
    pub phi: [f64; 3],
    pub braced: bool,
    pub partial_grip: bool,
    pub pressure: f64,
    pub blocked: bool,
    pub stalled: bool,
}

impl From<&RobotState> for StateRecord {
    fn from(s: &RobotState) -> Self {
        let p = s.tip_position();
        let q = s.orientation.quaternion();
        Self {
            t: s.t,
            route_position: s.route_position,
            everted_length: s.everted_length,
            tip: [p.x, p.y, p.z],
            orientation: [q.w, q.i, q.j, q.k],
            joint: [s.joint.theta, s.joint.beta, s.joint.gamma],
            phi: s.tendons.phi,
            braced: s.braced,
            partial_grip: s.partial_grip,
            pressure: s.body.pressure,
            blocked: s.blocked,
            stalled: s.stalled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub everted_length: f64,
}

/// Everything a scenario produced.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub network: PipeNetwork,
    /// Centerline the tip actually followed.
    pub route: Route,
    pub final_state: RobotState,
    /// One record per step, starting at t = 0.
    pub trace: Vec<StateRecord>,
    /// Ground-truth tip pose at every IMU sample.
    pub truth: Vec<TruthSample>,
    pub imu: Vec<SensorFrame>,
    pub encoder: Vec<EncoderSample>,
    pub environment: Vec<EnvironmentSample>,
    /// Body polyline at the end of the run.
    pub ground_truth: Polyline,
}

impl ScenarioRun {
    /// Sum of the encoder increments converted to tip advance, m.
    pub fn encoder_length(&self) -> f64 {
        let s = self.config.sensors();
        self.encoder
            .iter()
            .map(|e| e.delta_theta * s.r_spool_base / s.eversion_factor)
            .sum()
    }
}

fn environment_reading(preset: &str) -> Option<(f64, f64)> {
    (preset == "burrow-field").then_some((presets::BURROW_TEMPERATURE_C, presets::BURROW_HUMIDITY_PCT))
}

/// Runs a preset under its script. Deterministic for a given config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, SimError> {
    cfg.noise.validate()?;
    cfg.sim.validate()?;
    if cfg.encoder_decimation == 0 {
        return Err(SimError::InvalidConfig("encoder_decimation must be at least 1".into()));
    }
    let network = presets::by_name(&cfg.preset)?;
    let script = default_script(&cfg.preset, cfg.variant, &cfg.sim)?;
    let mut schedule = cfg.schedule.clone().unwrap_or(script.schedule.clone());
    schedule.sort_by(|a, b| a.t_start().total_cmp(&b.t_start()));
    let duration = match (cfg.duration, &cfg.schedule) {
        (Some(d), _) => d,
        (None, None) => script.duration,
        (None, Some(s)) => s.iter().map(ScheduleEntry::end).fold(0.0, f64::max) + 1.0,
    };
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(SimError::InvalidConfig(format!("duration {duration}")));
    }

    let dt = cfg.sim.dt;
    let mut sim = Simulator::with_initial_length(network.clone(), cfg.sim, cfg.seed, script.initial_length)?;
    let n_steps = (duration / dt).round() as usize;
    let env_every = ((1.0 / ENVIRONMENT_RATE) / dt).round().max(1.0) as usize;
    let env_reading = environment_reading(&cfg.preset);

    let mut trace = Vec::with_capacity(n_steps + 1);
    let mut truth = Vec::with_capacity(n_steps + 1);
    let mut environment = Vec::new();
    let mut record = |sim: &Simulator, k: usize, trace: &mut Vec<StateRecord>, truth: &mut Vec<TruthSample>| {
        let s = sim.state();
        trace.push(StateRecord::from(s));
        truth.push(TruthSample {
            t: s.t,
            position: s.tip_position(),
            orientation: s.orientation,
            everted_length: s.everted_length,
        });
        if let Some((temperature, humidity)) = env_reading {
            if k % env_every == 0 {
                environment.push(EnvironmentSample {
                    t: s.t,
                    temperature,
                    humidity,
                });
            }
        }
    };
    record(&sim, 0, &mut trace, &mut truth);

    let mut next = 0;
    for k in 0..n_steps {
        let t = k as f64 * dt;
        while next < schedule.len() && schedule[next].t_start() <= t + 0.5 * dt {
            match schedule[next] {
                ScheduleEntry::Motor { motor, duty, duration, .. } => {
                    sim.command(MotorCommand { motor, duty, duration })?
                }
                ScheduleEntry::Pressure { pressure_kpa, .. } => sim.set_pressure(pressure_kpa * 1000.0),
            }
            next += 1;
        }
        sim.step()?;
        record(&sim, k + 1, &mut trace, &mut truth);
    }

    let sensors = cfg.sensors();
    let (imu, encoder) = if truth.len() >= 2 {
        let times: Vec<f64> = truth.iter().map(|s| s.t).collect();
        let orientations: Vec<_> = truth.iter().map(|s| s.orientation).collect();
        let positions: Vec<_> = truth.iter().map(|s| s.position).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let imu = synth_imu(&times, &orientations, &positions, &cfg.noise, &sensors, &mut rng)?;
        let picked: Vec<&TruthSample> = truth.iter().step_by(cfg.encoder_decimation).collect();
        let enc_times: Vec<f64> = picked.iter().map(|s| s.t).collect();
        let lengths: Vec<f64> = picked.iter().map(|s| s.everted_length).collect();
        let encoder = synth_encoder(&enc_times, &lengths, &cfg.noise, &sensors)?;
        (imu, encoder)
    } else {
        (Vec::new(), Vec::new())
    };

    let final_state = sim.state().clone();
    Ok(ScenarioRun {
        config: cfg.clone(),
        route: sim.route().clone(),
        ground_truth: final_state.body_polyline(),
        network,
        final_state,
        trace,
        truth,
        imu,
        encoder,
        environment,
    })
}

#[derive(Debug, Clone)]
pub struct LocalizationOutcome {
    pub trajectory: TrajectoryEstimate,
    pub error: TrackingErrorReport,
    /// Length of the estimated track, m.
    pub path_length: f64,
}

/// Localizes a run from its synthetic sensor streams, starting from the
/// known entry pose, and scores it against the ground-truth body path.
pub fn localize_run(run: &ScenarioRun, mode: DeadReckoningMode) -> Result<LocalizationOutcome, SimError> {
    let start = run.truth.first().ok_or(SimError::TooShort(0))?;
    let sensors = run.config.sensors();
    let rate = 1.0 / run.config.sim.dt;
    let (gyro, accel) = run.config.noise.per_sample_sigmas(rate);
    let fusion = FusionConfig {
        gravity: sensors.gravity,
        mag_reference: sensors.mag_reference,
        initial: Some(start.orientation),
        ..Default::default()
    }
    .with_noise_gates(gyro, accel);
    let orientations = fuse_orientation(&run.imu, &fusion)?;
    let dr = DeadReckoningConfig {
        mode,
        r_spool_base: sensors.r_spool_base,
        eversion_factor: sensors.eversion_factor,
        gravity: sensors.gravity,
        origin: start.position,
    };
    let trajectory = dead_reckon(&run.encoder, &run.imu, &orientations, &dr)?;
    let error = tracking_error(&trajectory, &run.ground_truth)?;
    let path_length = trajectory.samples.iter().skip(1).zip(&trajectory.samples).map(|(b, a)| (b.p - a.p).norm()).sum();
    Ok(LocalizationOutcome {
        trajectory,
        error,
        path_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_entries_parse_both_shapes() {
        let json = r#"[{"t_start":1,"motor":4,"duty":100,"duration":2},{"t_start":3,"pressure_kpa":5.5}]"#;
        let entries: Vec<ScheduleEntry> = serde_json::from_str(json).unwrap();
        assert_eq!(entries[0], ScheduleEntry::motor(1.0, 4, 100.0, 2.0));
        assert_eq!(entries[1], ScheduleEntry::Pressure { t_start: 3.0, pressure_kpa: 5.5 });
    }

    #[test]
    fn unknown_preset_is_an_error() {
        let err = run_scenario(&ScenarioConfig::new("moon-base", 0));
        assert!(matches!(err, Err(SimError::Environment(EnvironmentError::UnknownPreset(_)))));
    }

    #[test]
    fn empty_script_is_stationary() {
        let cfg = ScenarioConfig {
            schedule: Some(Vec::new()),
            duration: Some(1.0),
            ..ScenarioConfig::new("pipe3d-45", 3)
        };
        let run = run_scenario(&cfg).unwrap();
        assert_eq!(run.imu.len(), 101);
        assert_eq!(run.final_state.everted_length, 0.0);
        for f in &run.imu {
            assert_eq!(f.omega, Vec3::zeros());
            assert!((f.accel - run.imu[0].accel).norm() < 1e-12);
        }
        assert!(run.encoder.iter().all(|e| e.delta_theta == 0.0));
    }

    #[test]
    fn climb_script_timeline() {
        let s = default_script("climb45", ScriptVariant::Default, &SimConfig::default()).unwrap();
        let starts: Vec<f64> = s.schedule.iter().map(ScheduleEntry::t_start).collect();
        assert_eq!(starts, [1.0, 10.0, 20.0, 79.0, 79.0, 80.0, 81.0]);
        let u = default_script("climb45", ScriptVariant::Unbraced, &SimConfig::default()).unwrap();
        assert_eq!(u.schedule.len(), 5);
        assert!((s.initial_length - 0.29).abs() < 1e-12);
    }
}
