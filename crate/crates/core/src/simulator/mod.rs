//! Quasi-static growth-and-steering simulation.
//!
//! The tip is confined to the centerline of the pipe it is growing through;
//! the body is the history of tip positions (tip leads, body follows). The
//! active joint is driven by the three steering tendons, relaxes back when
//! they are paid out, and rolls under gravity when bent upward without the
//! bracing legs engaged. At a junction the tip enters the branch whose axis
//! is closest to its heading.

mod scenario;
mod sensors;

pub use scenario::{
    default_script, localize_run, run_scenario, LocalizationOutcome, ScenarioConfig, ScenarioRun,
    ScheduleEntry, Script, ScriptVariant, StateRecord, TruthSample,
};
pub use sensors::{synth_encoder, synth_imu, NoiseModel, SensorConfig};

use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{holding_tendon_force, BodyState, TipInertia};
use crate::environment::{EnvironmentError, PipeNetwork, Route};
use crate::geometry::{Polyline, Vec3};
use crate::kinematics::{
    polar_angle, tip_direction, DeviceGeometry, HomogeneousTransform, KinematicsError, RotationAngles,
    TendonState, Workspace,
};
use crate::localization::LocalizationError;
use crate::STANDARD_GRAVITY;

pub const MOTOR_COUNT: usize = 5;
pub const BRACE_MOTOR: usize = 3;
pub const GROWTH_MOTOR: usize = 4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid motor command: {0}")]
    InvalidCommand(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("sensor synthesis needs at least two samples, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
}

/// One actuator request. Motors 0–2 wind the left, right and up spools,
/// 3 engages (duty > 0) or retracts (duty < 0) the bracing legs and 4 drives
/// growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorCommand {
    pub motor: usize,
    /// Percent, `[-100, 100]`.
    pub duty: f64,
    /// Seconds.
    pub duration: f64,
}

impl MotorCommand {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.motor >= MOTOR_COUNT {
            return Err(SimError::InvalidCommand(format!("motor {} outside 0..=4", self.motor)));
        }
        if !(-100.0..=100.0).contains(&self.duty) {
            return Err(SimError::InvalidCommand(format!("duty {} outside [-100, 100]", self.duty)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::InvalidCommand(format!("duration {} must be positive", self.duration)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Step, s.
    pub dt: f64,
    /// Tip speed at 100 % growth duty, m/s.
    pub growth_speed: f64,
    /// Spool speed at 100 % steering duty, rad/s.
    pub spool_speed: f64,
    /// Growth needs at least this body pressure, Pa.
    pub min_pressure: f64,
    pub initial_pressure: f64,
    /// Time constant of the joint relaxing after its tendon is paid out, s.
    pub relax_time: f64,
    /// Gravity topple gain of the unbraced roll, 1/s.
    pub roll_gain: f64,
    /// Roll random walk intensity, rad/√s.
    pub roll_sigma: f64,
    /// Roll only acts once the tip is bent up by more than this, rad.
    pub roll_threshold: f64,
    /// Outside diameter of the extended bracing legs, m.
    pub brace_envelope: f64,
    /// Spool motor stall torque, N·m.
    pub stall_torque: f64,
    /// Bending stiffness of the soft joint, N·m/rad.
    pub joint_stiffness: f64,
    pub geometry: DeviceGeometry,
    pub inertia: TipInertia,
    pub gravity: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            growth_speed: 0.02,
            spool_speed: 1.5,
            min_pressure: 1000.0,
            initial_pressure: 5500.0,
            relax_time: 0.5,
            roll_gain: 2.0,
            roll_sigma: 0.05,
            roll_threshold: 0.05,
            brace_envelope: 0.061,
            stall_torque: 13.0e-3,
            joint_stiffness: 0.02,
            geometry: DeviceGeometry::default(),
            inertia: TipInertia::default(),
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("growth_speed", self.growth_speed),
            ("spool_speed", self.spool_speed),
            ("relax_time", self.relax_time),
            ("brace_envelope", self.brace_envelope),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("roll_gain", self.roll_gain),
            ("roll_sigma", self.roll_sigma),
            ("stall_torque", self.stall_torque),
            ("joint_stiffness", self.joint_stiffness),
            ("min_pressure", self.min_pressure),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.geometry.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub t: f64,
    /// Arc length of `body_path`, m.
    pub everted_length: f64,
    /// Tip position along the route centerline, m.
    pub route_position: f64,
    /// Tip history; the last vertex is the tip.
    pub body_path: Vec<Vec3>,
    #[serde(skip, default = "HomogeneousTransform::identity")]
    pub tip_pose: HomogeneousTransform,
    pub orientation: UnitQuaternion<f64>,
    /// Active joint relative to the local pipe frame.
    pub joint: RotationAngles,
    pub tendons: TendonState,
    pub braced: bool,
    /// Bracing legs engaged but not touching the wall.
    pub partial_grip: bool,
    pub body: BodyState,
    /// Current tip speed, m/s.
    pub growth_rate: f64,
    /// Growth was requested but the tip could not advance.
    pub blocked: bool,
    /// A steering spool was held back at the workspace edge or by stall.
    pub stalled: bool,
}

impl RobotState {
    pub fn tip_position(&self) -> Vec3 {
        *self.tip_pose.translation()
    }

    pub fn body_polyline(&self) -> Polyline {
        Polyline::new(self.body_path.clone())
    }
}

#[derive(Debug, Clone, Copy)]
struct ActiveCommand {
    duty: f64,
    steps_left: u64,
}

/// Single-owner simulation loop.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    network: PipeNetwork,
    route: Route,
    workspace: Workspace,
    state: RobotState,
    active: [Option<ActiveCommand>; MOTOR_COUNT],
    steps: u64,
    roll_rng: ChaCha8Rng,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

impl Simulator {
    pub fn new(network: PipeNetwork, cfg: SimConfig, seed: u64) -> Result<Self, SimError> {
        Self::with_initial_length(network, cfg, seed, 0.0)
    }

    /// Starts with the body already grown `length` meters into the entry pipe.
    pub fn with_initial_length(network: PipeNetwork, cfg: SimConfig, seed: u64, length: f64) -> Result<Self, SimError> {
        cfg.validate()?;
        let route = Route::start(&network);
        if !(0.0..=route.length()).contains(&length) {
            return Err(SimError::InvalidConfig(format!(
                "initial length {length} outside the entry segment"
            )));
        }
        let diameter = route.diameter_at(0.0);
        let mut body_path = vec![route.point_at(0.0)];
        if length > 0.0 {
            body_path.push(route.point_at(length));
        }
        let everted_length = Polyline::new(body_path.clone()).length();
        let mut roll_rng = ChaCha8Rng::seed_from_u64(seed);
        roll_rng.set_stream(1);
        let mut sim = Self {
            workspace: Workspace::new(&cfg.geometry),
            state: RobotState {
                t: 0.0,
                everted_length,
                route_position: length,
                body_path,
                tip_pose: HomogeneousTransform::identity(),
                orientation: UnitQuaternion::identity(),
                joint: RotationAngles::default(),
                tendons: TendonState::default(),
                braced: false,
                partial_grip: false,
                body: BodyState::in_pipe(cfg.initial_pressure, diameter),
                growth_rate: 0.0,
                blocked: false,
                stalled: false,
            },
            cfg,
            network,
            route,
            active: [None; MOTOR_COUNT],
            steps: 0,
            roll_rng,
        };
        sim.update_pose();
        Ok(sim)
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn network(&self) -> &PipeNetwork {
        &self.network
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Whether `motor` still has a command running.
    pub fn is_busy(&self, motor: usize) -> bool {
        self.active.get(motor).is_some_and(Option::is_some)
    }

    /// Starts `cmd` now. A command already running on the same motor is
    /// superseded.
    pub fn command(&mut self, cmd: MotorCommand) -> Result<(), SimError> {
        cmd.validate()?;
        if cmd.motor == BRACE_MOTOR {
            if cmd.duty > 0.0 {
                self.set_bracing(true);
            } else if cmd.duty < 0.0 {
                self.set_bracing(false);
            }
        }
        let steps_left = ((cmd.duration / self.cfg.dt).round() as u64).max(1);
        self.active[cmd.motor] = Some(ActiveCommand {
            duty: cmd.duty,
            steps_left,
        });
        Ok(())
    }

    pub fn set_pressure(&mut self, pascal: f64) {
        self.state.body.pressure = pascal.max(0.0);
    }

    /// Extends or retracts the bracing legs. The grip is partial when the
    /// extended legs do not reach the pipe wall.
    pub fn set_bracing(&mut self, engaged: bool) {
        self.state.braced = engaged;
        self.update_grip();
    }

    fn update_grip(&mut self) {
        let diameter = self.route.diameter_at(self.state.route_position);
        self.state.partial_grip = self.state.braced && self.cfg.brace_envelope < diameter;
    }

    /// Current cross-section envelope of the tip, m.
    pub fn envelope(&self) -> f64 {
        if self.state.braced {
            self.cfg.brace_envelope
        } else {
            self.route.diameter_at(self.state.route_position)
        }
    }

    fn duty(&self, motor: usize) -> f64 {
        self.active[motor].map_or(0.0, |a| a.duty)
    }

    fn heading_world(&self, frame: &UnitQuaternion<f64>, joint: &RotationAngles) -> Vec3 {
        frame * joint.quaternion() * Vec3::z()
    }

    /// Advances the simulation by one step.
    pub fn step(&mut self) -> Result<&RobotState, SimError> {
        let dt = self.cfg.dt;
        self.state.stalled = false;
        self.step_tendons()?;
        self.step_joint()?;
        self.step_roll();
        self.step_growth()?;

        for slot in &mut self.active {
            if let Some(a) = slot {
                a.steps_left -= 1;
                if a.steps_left == 0 {
                    *slot = None;
                }
            }
        }
        self.steps += 1;
        self.state.t = self.steps as f64 * dt;
        self.update_grip();
        self.update_pose();
        Ok(&self.state)
    }

    fn step_tendons(&mut self) -> Result<(), SimError> {
        let geom = self.cfg.geometry;
        let max_phi = geom.max_spool_angle();
        let frame = self.route.frame_at(self.state.route_position);
        let blocked_force = self.cfg.stall_torque / geom.r_m;
        for motor in 0..3 {
            let duty = self.duty(motor);
            if duty == 0.0 {
                continue;
            }
            let mut tendons = self.state.tendons;
            let phi = (tendons.phi[motor] + self.cfg.spool_speed * duty / 100.0 * self.cfg.dt).clamp(0.0, max_phi);
            if phi == tendons.phi[motor] {
                continue;
            }
            tendons.phi[motor] = phi;
            let (theta, beta) = tendons.joint_angles(&geom)?;
            if !self.workspace.contains(theta, beta) {
                self.state.stalled = true;
                continue;
            }
            // only winding works against the load
            if phi > self.state.tendons.phi[motor] {
                let joint = RotationAngles::new(theta, beta, self.state.joint.gamma);
                let heading = self.heading_world(&frame, &joint);
                let gravity_sine = heading.cross(&Vec3::z()).norm();
                let bend = polar_angle(&tip_direction(theta, beta));
                let needed = holding_tendon_force(
                    &self.cfg.inertia,
                    self.cfg.gravity,
                    gravity_sine,
                    self.cfg.joint_stiffness,
                    bend,
                )
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
                if needed > blocked_force {
                    self.state.stalled = true;
                    continue;
                }
            }
            self.state.tendons = tendons;
        }
        Ok(())
    }

    fn step_joint(&mut self) -> Result<(), SimError> {
        let (theta_t, beta_t) = self.state.tendons.joint_angles(&self.cfg.geometry)?;
        let decay = (-self.cfg.dt / self.cfg.relax_time).exp();
        // a taut tendon sets the angle; a slack one lets it relax back
        let follow = |current: f64, target: f64| {
            if target * current < 0.0 || target.abs() >= current.abs() {
                target
            } else {
                target + (current - target) * decay
            }
        };
        let theta = follow(self.state.joint.theta, theta_t);
        let beta = follow(self.state.joint.beta, beta_t);
        let (theta, beta) = self.workspace.clamp(theta, beta);
        self.state.joint.theta = theta;
        self.state.joint.beta = beta;
        Ok(())
    }

    fn step_roll(&mut self) {
        let beta = self.state.joint.beta;
        let held = self.state.braced && !self.state.partial_grip;
        if held || beta <= self.cfg.roll_threshold {
            return;
        }
        let dt = self.cfg.dt;
        let gamma = self.state.joint.gamma;
        let noise: f64 = self.roll_rng.sample(StandardNormal);
        let next = gamma + self.cfg.roll_gain * gamma.sin() * beta.sin() * dt + self.cfg.roll_sigma * dt.sqrt() * noise;
        self.state.joint.gamma = wrap_angle(next);
    }

    fn step_growth(&mut self) -> Result<(), SimError> {
        let duty = self.duty(GROWTH_MOTOR);
        self.state.growth_rate = 0.0;
        self.state.blocked = false;
        if duty <= 0.0 {
            return Ok(());
        }
        if self.state.body.pressure < self.cfg.min_pressure {
            self.state.blocked = true;
            return Ok(());
        }
        let ds = self.cfg.growth_speed * duty / 100.0 * self.cfg.dt;
        let s0 = self.state.route_position;
        let mut target = s0 + ds;
        while target > self.route.length() {
            let Some(ji) = self.route.pending_junction(&self.network) else {
                target = self.route.length();
                break;
            };
            let frame = self.route.frame_at(self.route.length());
            let heading = self.heading_world(&frame, &self.state.joint);
            let junction = &self.network.junctions[ji];
            let branch = junction
                .arcs
                .iter()
                .enumerate()
                .max_by(|a, b| heading.dot(&a.1.t_out()).total_cmp(&heading.dot(&b.1.t_out())))
                .map(|(i, _)| i)
                .unwrap_or(0);
            self.route.push_branch(&self.network, branch)?;
        }
        if target <= s0 {
            self.state.blocked = true;
            return Ok(());
        }
        let boundaries: Vec<f64> = self
            .route
            .piece_starts()
            .iter()
            .copied()
            .filter(|&b| b > s0 && b < target)
            .collect();
        for s in boundaries.into_iter().chain(std::iter::once(target)) {
            self.push_vertex(self.route.point_at(s));
        }
        self.state.route_position = target;
        self.state.growth_rate = (target - s0) / self.cfg.dt;
        self.state.body = BodyState::in_pipe(self.state.body.pressure, self.route.diameter_at(target));
        Ok(())
    }

    fn push_vertex(&mut self, p: Vec3) {
        let last = *self.state.body_path.last().expect("body path has a base vertex");
        let chord = (p - last).norm();
        if chord > 0.0 {
            self.state.body_path.push(p);
            self.state.everted_length += chord;
        }
    }

    fn update_pose(&mut self) {
        let frame = self.route.frame_at(self.state.route_position);
        let q = frame * self.state.joint.quaternion();
        let tip = *self.state.body_path.last().expect("body path has a base vertex");
        self.state.orientation = q;
        self.state.tip_pose = HomogeneousTransform::from_quaternion(&q, tip);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::presets;

    fn straight_sim() -> Simulator {
        let net = presets::climb45(None).unwrap();
        Simulator::new(net, SimConfig::default(), 7).unwrap()
    }

    #[test]
    fn straight_growth_reaches_length() {
        let mut sim = straight_sim();
        sim.command(MotorCommand { motor: 4, duty: 100.0, duration: 10.0 }).unwrap();
        for _ in 0..1000 {
            sim.step().unwrap();
        }
        let s = sim.state();
        assert!((s.everted_length - 0.2).abs() < 1e-9);
        assert!((s.tip_position() - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-9);
        assert!((s.body_polyline().length() - s.everted_length).abs() < 1e-12);
    }

    #[test]
    fn low_pressure_blocks_growth() {
        let mut sim = straight_sim();
        sim.set_pressure(0.0);
        sim.command(MotorCommand { motor: 4, duty: 100.0, duration: 1.0 }).unwrap();
        sim.step().unwrap();
        assert!(sim.state().blocked);
        assert_eq!(sim.state().everted_length, 0.0);
    }

    #[test]
    fn winding_follows_tendon_map() {
        let mut sim = straight_sim();
        sim.command(MotorCommand { motor: 2, duty: 50.0, duration: 2.0 }).unwrap();
        for _ in 0..200 {
            sim.step().unwrap();
        }
        let s = sim.state();
        let expected = crate::kinematics::tendon_to_joint(1.5, 2, &sim.config().geometry).unwrap();
        assert!((s.tendons.phi[2] - 1.5).abs() < 1e-9);
        assert!((s.joint.beta - expected).abs() < 1e-9);
    }

    #[test]
    fn paid_out_tendon_relaxes_joint() {
        let mut sim = straight_sim();
        sim.command(MotorCommand { motor: 0, duty: 100.0, duration: 2.0 }).unwrap();
        for _ in 0..200 {
            sim.step().unwrap();
        }
        let bent = sim.state().joint.theta;
        assert!(bent > 0.2);
        sim.command(MotorCommand { motor: 0, duty: -100.0, duration: 2.0 }).unwrap();
        sim.step().unwrap();
        assert!(sim.state().joint.theta > sim.state().tendons.joint_angles(&sim.config().geometry).unwrap().0);
        for _ in 0..600 {
            sim.step().unwrap();
        }
        assert!(sim.state().joint.theta.abs() < 1e-3);
    }

    #[test]
    fn winding_stops_at_the_cone() {
        let mut sim = straight_sim();
        sim.command(MotorCommand { motor: 1, duty: 100.0, duration: 30.0 }).unwrap();
        sim.command(MotorCommand { motor: 2, duty: 100.0, duration: 30.0 }).unwrap();
        let mut saw_stall = false;
        for _ in 0..3000 {
            let s = sim.step().unwrap();
            saw_stall |= s.stalled;
            let polar = polar_angle(&tip_direction(s.joint.theta, s.joint.beta));
            assert!(polar <= sim.workspace().alpha_max + 1e-9);
        }
        assert!(saw_stall);
    }

    #[test]
    fn bracing_grip_depends_on_pipe() {
        let mut sim = straight_sim();
        sim.set_bracing(true);
        assert!(!sim.state().partial_grip);
        assert_eq!(sim.envelope(), 0.061);
        let wide = sim.network().scaled_diameters(0.08 / 0.053);
        let mut sim = Simulator::new(wide, SimConfig::default(), 7).unwrap();
        sim.set_bracing(true);
        assert!(sim.state().partial_grip);
        sim.set_bracing(false);
        assert!(!sim.state().partial_grip);
        assert!((sim.envelope() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn newer_command_supersedes() {
        let mut sim = straight_sim();
        sim.command(MotorCommand { motor: 4, duty: 100.0, duration: 10.0 }).unwrap();
        sim.step().unwrap();
        sim.command(MotorCommand { motor: 4, duty: 50.0, duration: 0.01 }).unwrap();
        sim.step().unwrap();
        assert!((sim.state().growth_rate - 0.01).abs() < 1e-12);
        sim.step().unwrap();
        assert!(!sim.is_busy(4));
        assert_eq!(sim.state().growth_rate, 0.0);
    }

    #[test]
    fn rejects_bad_commands() {
        let mut sim = straight_sim();
        for cmd in [
            MotorCommand { motor: 5, duty: 0.0, duration: 1.0 },
            MotorCommand { motor: 0, duty: 101.0, duration: 1.0 },
            MotorCommand { motor: 0, duty: 10.0, duration: 0.0 },
        ] {
            assert!(matches!(sim.command(cmd), Err(SimError::InvalidCommand(_))));
        }
    }

    #[test]
    fn dead_end_blocks() {
        let net = presets::burrow_field().unwrap();
        let len = crate::environment::centerline(&net, &[]).unwrap().length();
        let mut sim = Simulator::new(net, SimConfig::default(), 1).unwrap();
        sim.command(MotorCommand { motor: 4, duty: 100.0, duration: len / 0.02 + 1.0 }).unwrap();
        let mut blocked = false;
        while sim.is_busy(4) {
            blocked |= sim.step().unwrap().blocked;
        }
        assert!(blocked);
        assert!((sim.state().route_position - len).abs() < 1e-12);
        assert!((sim.state().tip_position() - presets::BURROW_END).norm() < 1e-9);
    }
}
