use proptest::prelude::*;

use vine_core::environment::presets;
use vine_core::protocol::{
    format_command, parse_command, parse_telemetry, serialize_telemetry, CommandMessage, ServerFrame,
    TelemetryMessage,
};
use vine_core::simulator::{SimConfig, Simulator};

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

fn telemetry() -> impl Strategy<Value = TelemetryMessage> {
    (
        0.0..1e4f64,
        proptest::array::uniform3(finite()),
        proptest::array::uniform4(-1.0..1.0f64),
        0.0..10.0f64,
        any::<bool>(),
        proptest::array::uniform3(-4.0..4.0f64),
        proptest::option::of(proptest::array::uniform3(finite())),
        proptest::option::of(-40.0..60.0f64),
        proptest::option::of(0.0..100.0f64),
    )
        .prop_map(|(t, tip, q, len, braced, joint, estimate, temperature, humidity)| TelemetryMessage {
            t,
            tip_position: tip,
            orientation: q,
            everted_length: len,
            braced,
            joint,
            estimate,
            temperature,
            humidity,
        })
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

proptest! {
    #[test]
    fn command_round_trip(motor in 0u8..=4, pwm in -100i8..=100, millis in 1u32..=60_000) {
        let cmd = CommandMessage { motor, pwm, duration: millis as f64 / 1000.0 };
        prop_assert_eq!(parse_command(&format_command(&cmd)).unwrap(), cmd);
    }

    #[test]
    fn arbitrary_lines_never_panic(line in ".{0,40}") {
        let _ = parse_command(&line);
    }

    #[test]
    fn telemetry_round_trip(msg in telemetry()) {
        let line = serialize_telemetry(&msg);
        prop_assert!(!line.contains('\n'));
        let back = parse_telemetry(&line).unwrap();
        prop_assert!((back.t - msg.t).abs() <= 1e-9);
        prop_assert!(close(&back.tip_position, &msg.tip_position));
        prop_assert!(close(&back.orientation, &msg.orientation));
        prop_assert!(close(&back.joint, &msg.joint));
        prop_assert!((back.everted_length - msg.everted_length).abs() <= 1e-9);
        prop_assert_eq!(back.braced, msg.braced);
        prop_assert_eq!(back.estimate.is_some(), msg.estimate.is_some());
        prop_assert_eq!(back.temperature.is_some(), msg.temperature.is_some());
        prop_assert_eq!(back.humidity.is_some(), msg.humidity.is_some());
        let frame = ServerFrame::Telemetry(msg);
        prop_assert!(matches!(ServerFrame::parse(&frame.to_line()).unwrap(), ServerFrame::Telemetry(_)));
    }
}

#[test]
fn initial_state_message_is_stable() {
    let net = presets::by_name("pipe3d-45").unwrap();
    let sim = Simulator::new(net, SimConfig::default(), 0).unwrap();
    let line = serialize_telemetry(&TelemetryMessage::from_state(sim.state()));
    let golden = include_str!("golden/telemetry_t0.json").trim();
    assert_eq!(line, golden);
}
