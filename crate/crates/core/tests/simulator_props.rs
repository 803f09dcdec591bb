use nalgebra::UnitQuaternion;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vine_core::environment::presets;
use vine_core::kinematics::{polar_angle, tip_direction};
use vine_core::localization::DeadReckoningMode;
use vine_core::simulator::{
    localize_run, run_scenario, synth_imu, MotorCommand, NoiseModel, ScenarioConfig, SensorConfig, SimConfig,
    Simulator,
};
use vine_core::Vec3;

fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn command() -> impl Strategy<Value = (f64, MotorCommand)> {
    (0.0..15.0f64, 0usize..5, -100.0..100.0f64, 0.05..6.0f64)
        .prop_map(|(t, motor, duty, duration)| (t, MotorCommand { motor, duty, duration }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_scripts_keep_invariants(
        preset in prop_oneof![Just("pipe3d-45"), Just("branch2d-7"), Just("burrow-field")],
        seed in any::<u64>(),
        mut script in proptest::collection::vec(command(), 0..12),
    ) {
        script.sort_by(|a, b| a.0.total_cmp(&b.0));
        let net = presets::by_name(preset).unwrap();
        let mut sim = Simulator::new(net.clone(), SimConfig::default(), seed).unwrap();
        let alpha_max = sim.workspace().alpha_max;
        sim.command(MotorCommand { motor: 4, duty: 100.0, duration: 20.0 }).unwrap();
        let mut next = 0;
        for _ in 0..2000 {
            while next < script.len() && script[next].0 <= sim.state().t {
                sim.command(script[next].1).unwrap();
                next += 1;
            }
            let s = sim.step().unwrap();
            prop_assert!((polyline_length(&s.body_path) - s.everted_length).abs() < 1e-9);
            let j = s.joint;
            prop_assert!(j.beta >= -1e-12);
            prop_assert!(polar_angle(&tip_direction(j.theta, j.beta)) <= alpha_max + 1e-9);
            prop_assert!(j.gamma > -std::f64::consts::PI - 1e-12 && j.gamma <= std::f64::consts::PI + 1e-12);
        }
        for v in &sim.state().body_path {
            prop_assert!(net.contains(v).inside, "vertex {v} outside");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = ScenarioConfig::new("branch2d-7", 42);
    cfg.duration = Some(15.0);
    cfg.noise = NoiseModel::monte_carlo();
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.imu, b.imu);
    assert_eq!(a.encoder, b.encoder);
    cfg.seed = 43;
    let c = run_scenario(&cfg).unwrap();
    assert_ne!(a.imu, c.imu);
}

#[test]
fn noiseless_pipe_round_trip() {
    let run = run_scenario(&ScenarioConfig::new("pipe3d-45", 0)).unwrap();
    let grown = run.truth.last().unwrap().everted_length - run.truth[0].everted_length;
    assert!((run.encoder_length() - grown).abs() < 1e-9);
    let out = localize_run(&run, DeadReckoningMode::Heading).unwrap();
    assert!(out.error.mean < 1e-6 * grown, "mean {} over {grown} m", out.error.mean);
}

#[test]
fn constant_yaw_rate_is_measured() {
    let n = 201;
    let dt = 0.01;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let q: Vec<_> = times
        .iter()
        .map(|t| UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 0.1 * t))
        .collect();
    let frames = synth_imu(
        &times,
        &q,
        &vec![Vec3::zeros(); n],
        &NoiseModel::default(),
        &SensorConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    for f in &frames[1..] {
        assert!((f.omega - Vec3::new(0.0, 0.0, 0.1)).norm() < 1e-6, "{}", f.omega);
    }
}

fn gyro_variance(sigma: f64, seed: u64) -> f64 {
    let n = 10_001;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
    let noise = NoiseModel {
        gyro_sigma: sigma,
        ..Default::default()
    };
    let frames = synth_imu(
        &times,
        &vec![UnitQuaternion::identity(); n],
        &vec![Vec3::zeros(); n],
        &noise,
        &SensorConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let xs: Vec<f64> = frames[1..].iter().map(|f| f.omega.x).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn doubling_noise_quadruples_variance() {
    let ratio = gyro_variance(0.02, 7) / gyro_variance(0.01, 8);
    assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
}
