//! The subcommands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use vine_core::dynamics::{blocked_force_report, blocked_tendon_force, simulate_blocked_force, write_force_csv};
use vine_core::environment::{presets, reconstruct_burrow, write_burrow_csv};
use vine_core::kinematics::{
    characterization_sweep, percentage_error, workspace_surface, write_workspace_csv, Workspace, WorkspaceSample,
};
use vine_core::localization::{io as locio, DeadReckoningMode};
use vine_core::simulator::{
    localize_run, run_scenario, NoiseModel, ScenarioConfig, ScenarioRun, ScriptVariant, StateRecord,
};
use vine_core::Polyline;
use vine_teleop::{TeleopConfig, DEFAULT_BIND};

use crate::analysis::{branch_outcome, climb_trials, climbed, monte_carlo};
use crate::report::{config_digest, finish, Bound, RunManifest, Summary};
use crate::{CliError, Context};

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Reachable tip surface and the six-line characterization sweep.
    Workspace(WorkspaceArgs),
    /// Pulsed stall test against a force sensor.
    BlockedForce(BlockedForceArgs),
    /// Dead-reckoning localization on a pipe course.
    Localize(LocalizeArgs),
    /// Steering through the seven-junction planar course.
    Steer2d(Steer2dArgs),
    /// Braced out-of-plane climb into an upward branch.
    Climb3d(Climb3dArgs),
    /// Burrow reconstruction with the environment overlay.
    Burrow(BurrowArgs),
    /// Teleoperation server.
    Serve(ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Workspace(_) => "workspace",
            Command::BlockedForce(_) => "blocked-force",
            Command::Localize(_) => "localize",
            Command::Steer2d(_) => "steer2d",
            Command::Climb3d(_) => "climb3d",
            Command::Burrow(_) => "burrow",
            Command::Serve(_) => "serve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct WorkspaceArgs {
    /// Grid spacing of the surface sample, degrees.
    #[arg(long, default_value_t = 0.5)]
    pub resolution_deg: f64,
    #[arg(long, default_value_t = 50)]
    pub samples_per_line: usize,
    /// Measured maximum lateral angle to compare with theory, degrees.
    #[arg(long, default_value_t = 56.0)]
    pub measured_theta_deg: f64,
    /// Measured maximum elevation angle to compare with theory, degrees.
    #[arg(long, default_value_t = 51.7)]
    pub measured_alpha_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct BlockedForceArgs {
    /// Stall torque, N·mm. Overrides the config file.
    #[arg(long)]
    pub tau_m_nmm: Option<f64>,
    /// Spool radius, mm. Overrides the config file.
    #[arg(long)]
    pub r_m_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseChoice {
    None,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    Heading,
    Velocity,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct LocalizeArgs {
    #[arg(long, default_value = "pipe3d-45")]
    pub preset: String,
    /// Sensor noise; defaults to the config file's, else none.
    #[arg(long, value_enum)]
    pub noise: Option<NoiseChoice>,
    #[arg(long, value_enum, default_value_t = ModeChoice::Heading)]
    pub mode: ModeChoice,
    /// Also compare heading and velocity mode over this many noisy seeds.
    #[arg(long, default_value_t = 0)]
    pub monte_carlo_runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteerScript {
    /// Take every right branch.
    Default,
    /// Grow only; no steering.
    Null,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct Steer2dArgs {
    #[arg(long, value_enum, default_value_t = SteerScript::Default)]
    pub script: SteerScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClimbVariant {
    Braced,
    Unbraced,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct Climb3dArgs {
    #[arg(long, value_enum, default_value_t = ClimbVariant::Braced)]
    pub variant: ClimbVariant,
    /// Repeat with consecutive seeds and report the success rate.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Required success rate (braced) or failure rate (unbraced).
    #[arg(long, default_value_t = 0.95)]
    pub min_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct BurrowArgs {
    /// Allowed endpoint distance from the surveyed displacement, m.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, env = "VINE_BIND", default_value = DEFAULT_BIND)]
    pub bind: String,
    #[arg(long, default_value_t = 10.0)]
    pub telemetry_hz: f64,
    /// Session settings as JSON (preset, seed, sim, initial_length, ...).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    command: &'a Command,
    seed: u64,
    config: &'a crate::RunConfig,
}

/// Runs `cmd`, writes its outputs and returns the summary and manifest.
/// `serve` blocks until the server stops.
pub fn execute(cmd: &Command, ctx: &Context) -> Result<(Summary, RunManifest), CliError> {
    fs::create_dir_all(&ctx.out_dir)?;
    let mut summary = match cmd {
        Command::Workspace(a) => workspace(ctx, a)?,
        Command::BlockedForce(a) => blocked_force(ctx, a)?,
        Command::Localize(a) => localize(ctx, a)?,
        Command::Steer2d(a) => steer2d(ctx, a)?,
        Command::Climb3d(a) => climb3d(ctx, a)?,
        Command::Burrow(a) => burrow(ctx, a)?,
        Command::Serve(a) => return serve(ctx, cmd, a),
    };
    let digest = config_digest(&DigestInput {
        command: cmd,
        seed: ctx.seed,
        config: &ctx.config,
    })?;
    let manifest = finish(&ctx.out_dir, &mut summary, digest)?;
    Ok((summary, manifest))
}

fn create(dir: &Path, name: &str, summary: &mut Summary) -> Result<BufWriter<File>, CliError> {
    summary.output(name);
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn scenario_config(ctx: &Context, preset: &str) -> ScenarioConfig {
    ScenarioConfig {
        sim: ctx.config.sim,
        noise: ctx.config.noise.unwrap_or_default(),
        ..ScenarioConfig::new(preset, ctx.seed)
    }
}

fn workspace(ctx: &Context, a: &WorkspaceArgs) -> Result<Summary, CliError> {
    let geom = &ctx.config.geometry;
    let surface = workspace_surface(geom, a.resolution_deg.to_radians())?;
    let sweeps = characterization_sweep(geom, a.samples_per_line)?;
    let ws = Workspace::new(geom);
    let r_eff = geom.effective_radius();
    let alpha_deg = ws.alpha_max.to_degrees();
    let theta_deg = ws.theta_max().to_degrees();

    let all: Vec<&WorkspaceSample> = surface.iter().chain(sweeps.iter().flat_map(|s| &s.samples)).collect();
    let radius_dev = all.iter().map(|s| (s.position.norm() - r_eff).abs()).fold(0.0, f64::max);
    // elevation: angle above the plane spanned by the lateral and growth axes
    let elevation = all
        .iter()
        .map(|s| (s.position.x / s.position.norm()).asin().to_degrees())
        .fold(f64::MIN, f64::max);
    let polar = all
        .iter()
        .map(|s| vine_core::kinematics::polar_angle(&s.position).to_degrees())
        .fold(0.0, f64::max);

    let mut sum = Summary::new("workspace", ctx.seed);
    sum.metric("alpha_max_deg", alpha_deg)
        .metric("theta_max_deg", theta_deg)
        .metric("r_eff_m", r_eff)
        .metric("samples", all.len() as f64)
        .metric("pct_err_theta", percentage_error(a.measured_theta_deg, theta_deg)?)
        .metric("pct_err_alpha", percentage_error(a.measured_alpha_deg, alpha_deg)?)
        .checked("max_radius_deviation_m", radius_dev, Bound::AtMost { limit: 1e-9 })
        .checked("max_elevation_deg", elevation, Bound::Within { target: alpha_deg, tolerance: 0.01 })
        .checked("max_polar_deg", polar, Bound::AtMost { limit: alpha_deg + 1e-9 });

    write_workspace_csv(create(&ctx.out_dir, "workspace_surface.csv", &mut sum)?, &surface)?;
    for s in &sweeps {
        let kind = serde_json::to_value(s.kind)?;
        let name = format!("sweep_{}.csv", kind.as_str().unwrap_or("unknown"));
        write_workspace_csv(create(&ctx.out_dir, &name, &mut sum)?, &s.samples)?;
    }
    Ok(sum)
}

fn blocked_force(ctx: &Context, a: &BlockedForceArgs) -> Result<Summary, CliError> {
    let mut cfg = ctx.config.blocked_force;
    if let Some(t) = a.tau_m_nmm {
        cfg.tau_m = t * 1e-3;
    }
    if let Some(r) = a.r_m_mm {
        cfg.r_m = r * 1e-3;
    }
    let trace = simulate_blocked_force(&cfg)?;
    let report = blocked_force_report(&trace, cfg.r_m);
    let expected = blocked_tendon_force(cfg.tau_m, cfg.r_m)?;
    let tau_dev_pct = if cfg.tau_m == 0.0 {
        report.back_solved_tau.abs() * 100.0
    } else {
        percentage_error(report.back_solved_tau, cfg.tau_m)?
    };
    let crosstalk = trace
        .iter()
        .map(|s| s.compensated.x.abs().max(s.compensated.y.abs()))
        .fold(0.0, f64::max);

    let mut sum = Summary::new("blocked-force", ctx.seed);
    sum.metric("expected_force_n", expected)
        .metric("peak_fx_n", report.peak.x)
        .metric("peak_fy_n", report.peak.y)
        .metric("peak_fz_n", report.peak.z)
        .metric("peak_total_n", report.peak_total)
        .metric("back_solved_tau_nmm", report.back_solved_tau * 1e3)
        .checked("peak_force_error_n", (report.peak_total - expected).abs(), Bound::AtMost { limit: 1e-6 })
        .checked("tau_deviation_pct", tau_dev_pct, Bound::AtMost { limit: 0.01 })
        .checked("crosstalk_n", crosstalk, Bound::AtMost { limit: 1e-9 });
    write_force_csv(create(&ctx.out_dir, "blocked_force.csv", &mut sum)?, &trace)?;
    Ok(sum)
}

fn write_polyline(path: BufWriter<File>, line: &Polyline) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(path);
    w.write_record(["x", "y", "z"])?;
    for p in &line.points {
        w.write_record([p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: BufWriter<File>, trace: &[StateRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(path);
    w.write_record([
        "t", "route_position", "everted_length", "tip_x", "tip_y", "tip_z", "qw", "qx", "qy", "qz", "theta",
        "beta", "gamma", "phi_left", "phi_right", "phi_up", "braced", "partial_grip", "pressure_pa", "blocked",
        "stalled",
    ])?;
    for r in trace {
        let mut row: Vec<String> = vec![r.t, r.route_position, r.everted_length]
            .into_iter()
            .chain(r.tip)
            .chain(r.orientation)
            .chain(r.joint)
            .chain(r.phi)
            .map(|v| v.to_string())
            .collect();
        row.push(r.braced.to_string());
        row.push(r.partial_grip.to_string());
        row.push(r.pressure.to_string());
        row.push(r.blocked.to_string());
        row.push(r.stalled.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Streams every run writes: sensor logs, ground truth and the estimate.
fn write_run(ctx: &Context, run: &ScenarioRun, mode: DeadReckoningMode, sum: &mut Summary) -> Result<(), CliError> {
    let out = localize_run(run, mode)?;
    locio::write_imu_csv(create(&ctx.out_dir, "imu.csv", sum)?, &run.imu)?;
    locio::write_encoder_csv(create(&ctx.out_dir, "encoder.csv", sum)?, &run.encoder)?;
    locio::write_trajectory_ndjson(create(&ctx.out_dir, "trajectory.ndjson", sum)?, &out.trajectory)?;
    write_polyline(create(&ctx.out_dir, "ground_truth.csv", sum)?, &run.ground_truth)?;
    write_trace(create(&ctx.out_dir, "trace.csv", sum)?, &run.trace)?;
    sum.metric("mean_error_m", out.error.mean)
        .metric("std_error_m", out.error.std_dev)
        .metric("max_error_m", out.error.max)
        .metric("estimate_path_length_m", out.path_length)
        .metric("encoder_length_m", run.encoder_length());
    Ok(())
}

fn localize(ctx: &Context, a: &LocalizeArgs) -> Result<Summary, CliError> {
    let noise = match a.noise {
        Some(NoiseChoice::None) => NoiseModel::default(),
        Some(NoiseChoice::MonteCarlo) => NoiseModel::monte_carlo(),
        None => ctx.config.noise.unwrap_or_default(),
    };
    let mode = match a.mode {
        ModeChoice::Heading => DeadReckoningMode::Heading,
        ModeChoice::Velocity => DeadReckoningMode::Velocity,
    };
    let cfg = ScenarioConfig {
        noise,
        ..scenario_config(ctx, &a.preset)
    };
    let run = run_scenario(&cfg)?;
    let mut sum = Summary::new("localize", ctx.seed);
    sum.label("preset", a.preset.as_str());
    write_run(ctx, &run, mode, &mut sum)?;
    let path = sum.metrics["estimate_path_length_m"];
    let encoder = sum.metrics["encoder_length_m"];
    let truth = run.truth.last().map_or(0.0, |s| s.everted_length) - run.truth.first().map_or(0.0, |s| s.everted_length);
    sum.metric("truth_growth_m", truth);
    if noise.is_noiseless() {
        sum.checked("path_length_residual_m", (path - encoder).abs(), Bound::AtMost { limit: 1e-9 })
            .checked("encoder_residual_m", (encoder - truth).abs(), Bound::AtMost { limit: 1e-9 });
        if mode == DeadReckoningMode::Heading {
            let mean = sum.metrics["mean_error_m"];
            sum.checked("mean_error_m", mean, Bound::AtMost { limit: 1e-6 });
        }
    }
    if a.monte_carlo_runs > 0 {
        let mc = monte_carlo(&a.preset, NoiseModel::monte_carlo(), ctx.seed, a.monte_carlo_runs, &cfg)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        sum.metric("mc_runs", mc.runs as f64)
            .metric("mc_heading_wins", mc.heading_wins as f64)
            .metric("mc_heading_mean_m", mean(&mc.heading_mean))
            .metric("mc_velocity_mean_m", mean(&mc.velocity_mean))
            .checked(
                "mc_heading_win_rate",
                mc.heading_wins as f64 / mc.runs as f64,
                Bound::AtLeast { limit: 0.95 },
            );
    }
    Ok(sum)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn steer2d(ctx: &Context, a: &Steer2dArgs) -> Result<Summary, CliError> {
    let variant = match a.script {
        SteerScript::Default => ScriptVariant::Default,
        SteerScript::Null => ScriptVariant::Null,
    };
    let cfg = ScenarioConfig {
        variant,
        ..scenario_config(ctx, "branch2d-7")
    };
    let run = run_scenario(&cfg)?;
    let outcome = branch_outcome(&run);
    let junctions = run.network.junctions.len() as f64;
    let mut sum = Summary::new("steer2d", ctx.seed);
    sum.label("branches", join(&outcome.choices))
        .label("exit_segment", outcome.exit_segment.as_str())
        .metric("junctions_reached", outcome.choices.len() as f64)
        .metric("final_route_position_m", run.final_state.route_position)
        .metric("duration_s", run.final_state.t);
    match a.script {
        SteerScript::Default => {
            sum.checked("right_turns", outcome.turns as f64, Bound::AtLeast { limit: junctions })
                .checked(
                    "junctions_passed_through",
                    outcome.passed_through as f64,
                    Bound::AtLeast { limit: junctions },
                );
        }
        SteerScript::Null => {
            sum.checked("right_turns", outcome.turns as f64, Bound::AtMost { limit: 0.0 });
        }
    }
    write_run(ctx, &run, DeadReckoningMode::Heading, &mut sum)?;
    write_polyline(create(&ctx.out_dir, "body.csv", &mut sum)?, &run.final_state.body_polyline())?;
    Ok(sum)
}

fn climb3d(ctx: &Context, a: &Climb3dArgs) -> Result<Summary, CliError> {
    if a.runs == 0 {
        return Err(CliError::InvalidArgument("--runs must be at least 1".into()));
    }
    let variant = match a.variant {
        ClimbVariant::Braced => ScriptVariant::Default,
        ClimbVariant::Unbraced => ScriptVariant::Unbraced,
    };
    let cfg = ScenarioConfig {
        variant,
        ..scenario_config(ctx, "climb45")
    };
    let run = run_scenario(&cfg)?;
    let mut sum = Summary::new("climb3d", ctx.seed);
    sum.label("variant", format!("{:?}", a.variant).to_lowercase())
        .metric("climbed", climbed(&run) as u8 as f64)
        .metric("final_roll_rad", run.final_state.joint.gamma)
        .metric("final_tip_z_m", run.final_state.tip_position().z);
    let stats = climb_trials(variant, ctx.seed, a.runs, &cfg)?;
    let rate = stats.successes as f64 / stats.runs as f64;
    sum.metric("runs", stats.runs as f64).metric("successes", stats.successes as f64);
    match a.variant {
        ClimbVariant::Braced => sum.checked("success_rate", rate, Bound::AtLeast { limit: a.min_rate }),
        ClimbVariant::Unbraced => sum.checked("failure_rate", 1.0 - rate, Bound::AtLeast { limit: a.min_rate }),
    };
    write_trace(create(&ctx.out_dir, "trace.csv", &mut sum)?, &run.trace)?;
    write_polyline(create(&ctx.out_dir, "body.csv", &mut sum)?, &run.final_state.body_polyline())?;
    Ok(sum)
}

fn burrow(ctx: &Context, a: &BurrowArgs) -> Result<Summary, CliError> {
    let run = run_scenario(&scenario_config(ctx, "burrow-field"))?;
    let out = localize_run(&run, DeadReckoningMode::Heading)?;
    let profile = reconstruct_burrow(&out.trajectory, &run.environment)?;
    let s = profile.summary();
    let mut sum = Summary::new("burrow", ctx.seed);
    sum.metric("displacement_x_m", s.displacement.x)
        .metric("displacement_y_m", s.displacement.y)
        .metric("displacement_z_m", s.displacement.z)
        .metric("vertical_rise_m", s.vertical_rise)
        .metric("path_length_m", s.path_length)
        .metric("mean_error_m", out.error.mean)
        .checked(
            "displacement_error_m",
            (s.displacement - presets::BURROW_END).norm(),
            Bound::AtMost { limit: a.tolerance_m },
        )
        .checked(
            "bending_angle_deg",
            s.bending_angle_deg.unwrap_or(f64::NAN),
            Bound::Within { target: 61.9, tolerance: 0.1 },
        )
        .checked(
            "mean_temperature_c",
            s.mean_temperature.unwrap_or(f64::NAN),
            Bound::Within { target: presets::BURROW_TEMPERATURE_C, tolerance: 1e-9 },
        )
        .checked(
            "mean_humidity_pct",
            s.mean_humidity.unwrap_or(f64::NAN),
            Bound::Within { target: presets::BURROW_HUMIDITY_PCT, tolerance: 1e-9 },
        );
    write_burrow_csv(create(&ctx.out_dir, "burrow.csv", &mut sum)?, &profile)?;
    locio::write_trajectory_ndjson(create(&ctx.out_dir, "trajectory.ndjson", &mut sum)?, &out.trajectory)?;
    Ok(sum)
}

fn serve(ctx: &Context, cmd: &Command, a: &ServeArgs) -> Result<(Summary, RunManifest), CliError> {
    let mut cfg = match &a.scenario {
        Some(path) => TeleopConfig::from_scenario_file(path)?,
        None => TeleopConfig {
            seed: ctx.seed,
            sim: ctx.config.sim,
            ..Default::default()
        },
    };
    cfg.bind = a.bind.clone();
    cfg.telemetry_hz = a.telemetry_hz;
    let server = vine_teleop::serve(&cfg)?;
    let addr = server.local_addr();
    let mut sum = Summary::new("serve", cfg.seed);
    sum.label("address", addr.to_string())
        .label("preset", cfg.preset.as_str())
        .metric("telemetry_hz", cfg.telemetry_hz);
    let digest = config_digest(&(cmd, &cfg))?;
    let manifest = finish(&ctx.out_dir, &mut sum, digest)?;
    println!("listening on {addr}");
    server.wait();
    Ok((sum, manifest))
}
