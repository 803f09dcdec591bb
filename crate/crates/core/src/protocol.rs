//! Operator wire formats.
//!
//! Commands are single ASCII lines `motor,pwm,duration`, for example
//! `1,100,10` (motor 1 at 100 % duty for 10 s). Server output is one JSON
//! object per line: telemetry, command acknowledgements and error frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::{MotorCommand, RobotState};
use crate::geometry::Vec3;

pub const MAX_MOTOR: u8 = 4;
pub const MAX_DURATION: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("expected 3 comma-separated fields, found {found}")]
    FieldCount { found: usize },
    #[error("field `{field}` is not a number: {value:?}")]
    NonNumeric { field: &'static str, value: String },
    #[error("field `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: String },
    #[error("malformed telemetry: {0}")]
    Telemetry(String),
}

impl ProtocolError {
    /// Short machine-readable name used in error frames.
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolError::FieldCount { .. } => "field_count",
            ProtocolError::NonNumeric { .. } => "non_numeric",
            ProtocolError::OutOfRange { .. } => "out_of_range",
            ProtocolError::Telemetry(_) => "telemetry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    /// 0–2 steering spools, 3 bracing, 4 growth.
    pub motor: u8,
    /// Duty, percent.
    pub pwm: i8,
    /// Seconds, `(0, 60]`.
    pub duration: f64,
}

impl CommandMessage {
    pub fn to_motor_command(&self) -> MotorCommand {
        MotorCommand {
            motor: self.motor as usize,
            duty: self.pwm as f64,
            duration: self.duration,
        }
    }
}

/// Parses `motor,pwm,duration`. Whitespace around fields and a trailing
/// newline are ignored.
pub fn parse_command(line: &str) -> Result<CommandMessage, ProtocolError> {
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(ProtocolError::FieldCount { found: fields.len() });
    }
    let int = |field: &'static str, raw: &str| {
        raw.parse::<i64>().map_err(|_| ProtocolError::NonNumeric {
            field,
            value: raw.to_string(),
        })
    };
    let motor = int("motor", fields[0])?;
    let pwm = int("pwm", fields[1])?;
    let duration = fields[2].parse::<f64>().map_err(|_| ProtocolError::NonNumeric {
        field: "duration",
        value: fields[2].to_string(),
    })?;
    if !(0..=MAX_MOTOR as i64).contains(&motor) {
        return Err(ProtocolError::OutOfRange {
            field: "motor",
            value: fields[0].to_string(),
        });
    }
    if !(-100..=100).contains(&pwm) {
        return Err(ProtocolError::OutOfRange {
            field: "pwm",
            value: fields[1].to_string(),
        });
    }
    if !(duration > 0.0 && duration <= MAX_DURATION) {
        return Err(ProtocolError::OutOfRange {
            field: "duration",
            value: fields[2].to_string(),
        });
    }
    Ok(CommandMessage {
        motor: motor as u8,
        pwm: pwm as i8,
        duration,
    })
}

/// Inverse of [`parse_command`], without a trailing newline.
pub fn format_command(cmd: &CommandMessage) -> String {
    format!("{},{},{}", cmd.motor, cmd.pwm, cmd.duration)
}

/// State broadcast to operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryMessage {
    pub t: f64,
    pub tip_position: [f64; 3],
    /// `[w, x, y, z]`
    pub orientation: [f64; 4],
    pub everted_length: f64,
    pub braced: bool,
    /// Active joint `[θ, β, γ]`, rad.
    pub joint: [f64; 3],
    /// Dead-reckoned tip position, when a localizer is running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<[f64; 3]>,
    /// °C
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// %RH
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub humidity: Option<f64>,
}

impl TelemetryMessage {
    pub fn from_state(state: &RobotState) -> Self {
        let p = state.tip_position();
        let q = state.orientation.quaternion();
        Self {
            t: state.t,
            tip_position: [p.x, p.y, p.z],
            orientation: [q.w, q.i, q.j, q.k],
            everted_length: state.everted_length,
            braced: state.braced,
            joint: [state.joint.theta, state.joint.beta, state.joint.gamma],
            estimate: None,
            temperature: None,
            humidity: None,
        }
    }

    pub fn with_estimate(mut self, p: Vec3) -> Self {
        self.estimate = Some([p.x, p.y, p.z]);
        self
    }
}

/// One JSON line, without the trailing newline. Field order is fixed.
pub fn serialize_telemetry(msg: &TelemetryMessage) -> String {
    serde_json::to_string(msg).expect("telemetry always serializes")
}

pub fn parse_telemetry(line: &str) -> Result<TelemetryMessage, ProtocolError> {
    serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Telemetry(e.to_string()))
}

/// Everything the server sends, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerFrame {
    Telemetry(TelemetryMessage),
    /// A command was accepted and queued as number `seq`.
    Ack { seq: u64, command: String },
    Error { kind: String, message: String },
}

impl ServerFrame {
    pub fn error(err: &ProtocolError) -> Self {
        ServerFrame::Error {
            kind: err.kind().to_string(),
            message: err.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }

    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Telemetry(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_operator_example() {
        let cmd = parse_command("1,100,10").unwrap();
        assert_eq!(cmd, CommandMessage { motor: 1, pwm: 100, duration: 10.0 });
        let zero = parse_command("0,0,1\n").unwrap();
        assert_eq!(zero.pwm, 0);
        assert_eq!(parse_command(" 4 , -50 , 2.5 \r\n").unwrap().pwm, -50);
    }

    #[test]
    fn distinct_error_kinds() {
        assert_eq!(parse_command("1,100"), Err(ProtocolError::FieldCount { found: 2 }));
        assert_eq!(parse_command(""), Err(ProtocolError::FieldCount { found: 1 }));
        assert!(matches!(parse_command("a,100,10"), Err(ProtocolError::NonNumeric { field: "motor", .. })));
        assert!(matches!(parse_command("1,1.5,10"), Err(ProtocolError::NonNumeric { field: "pwm", .. })));
        assert!(matches!(parse_command("5,100,10"), Err(ProtocolError::OutOfRange { field: "motor", .. })));
        assert!(matches!(parse_command("1,101,10"), Err(ProtocolError::OutOfRange { field: "pwm", .. })));
        assert!(matches!(parse_command("1,100,0"), Err(ProtocolError::OutOfRange { field: "duration", .. })));
        assert!(matches!(parse_command("1,100,61"), Err(ProtocolError::OutOfRange { field: "duration", .. })));
        assert!(matches!(parse_command("1,100,NaN"), Err(ProtocolError::OutOfRange { .. })));
    }

    #[test]
    fn format_round_trip() {
        let cmd = CommandMessage { motor: 2, pwm: -7, duration: 0.25 };
        assert_eq!(format_command(&cmd), "2,-7,0.25");
        assert_eq!(parse_command(&format_command(&cmd)).unwrap(), cmd);
    }

    #[test]
    fn optional_fields_are_omitted() {
        let msg = TelemetryMessage {
            t: 0.0,
            tip_position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0, 0.0],
            everted_length: 0.0,
            braced: false,
            joint: [0.0; 3],
            estimate: None,
            temperature: None,
            humidity: None,
        };
        let line = serialize_telemetry(&msg);
        assert!(!line.contains("temperature") && !line.contains('\n'));
        assert_eq!(parse_telemetry(&line).unwrap(), msg);
    }

    #[test]
    fn frames_are_tagged() {
        let ack = ServerFrame::Ack { seq: 3, command: "1,100,10".into() };
        assert_eq!(ack.to_line(), r#"{"type":"ack","seq":3,"command":"1,100,10"}"#);
        let err = ServerFrame::error(&ProtocolError::FieldCount { found: 2 });
        assert!(err.to_line().starts_with(r#"{"type":"error","kind":"field_count""#));
        assert_eq!(ServerFrame::parse(&ack.to_line()).unwrap(), ack);
    }
}
