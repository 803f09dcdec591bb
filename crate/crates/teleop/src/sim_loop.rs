use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError};

use vine_core::localization::HeadingIntegrator;
use vine_core::protocol::{CommandMessage, TelemetryMessage};
use vine_core::simulator::Simulator;

use crate::server::{lock, AppliedCommand, Shared};

const MAX_IDLE: Duration = Duration::from_millis(5);

pub(crate) struct Queued {
    pub seq: u64,
    pub client: u64,
    pub command: CommandMessage,
    pub received: f64,
}

pub(crate) struct LoopConfig {
    pub time_scale: f64,
    /// Constant `(°C, %RH)` reported by the tip sensor, if it has one.
    pub environment: Option<(f64, f64)>,
}

/// Owns the simulator. Keeps simulated time in step with the wall clock,
/// applying queued commands in order between steps.
pub(crate) fn run(mut sim: Simulator, rx: Receiver<Queued>, shared: Arc<Shared>, cfg: LoopConfig) {
    let dt = sim.config().dt;
    let mut estimator = HeadingIntegrator::new(sim.state().tip_position());
    let mut last_length = sim.state().everted_length;
    let mut pending: Option<Queued> = None;
    while !shared.stopped() {
        if let Some(q) = pending.take().or_else(|| rx.try_recv().ok()) {
            apply(&mut sim, q, &shared);
            continue;
        }
        let target = (shared.elapsed() * cfg.time_scale / dt).floor() as u64;
        let mut stepped = false;
        while sim.steps() < target {
            match sim.step() {
                Ok(s) => {
                    let dl = s.everted_length - last_length;
                    last_length = s.everted_length;
                    estimator.advance(s.t, s.orientation, dl);
                    stepped = true;
                }
                Err(e) => {
                    eprintln!("vine-teleop: simulator step failed: {e}");
                    return;
                }
            }
            // let commands in between steps during a catch-up burst
            if !rx.is_empty() {
                break;
            }
        }
        if stepped {
            let mut msg = TelemetryMessage::from_state(sim.state()).with_estimate(estimator.position());
            if let Some((temp, rh)) = cfg.environment {
                msg.temperature = Some(temp);
                msg.humidity = Some(rh);
            }
            shared.telemetry.store(Arc::new(msg));
        }
        let next_step = (sim.steps() + 1) as f64 * dt / cfg.time_scale;
        let wait = Duration::from_secs_f64((next_step - shared.elapsed()).max(0.0)).min(MAX_IDLE);
        match rx.recv_timeout(wait) {
            Ok(q) => pending = Some(q),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => return,
        }
    }
}

fn apply(sim: &mut Simulator, q: Queued, shared: &Shared) {
    if let Err(e) = sim.command(q.command.to_motor_command()) {
        // parse_command enforces the same ranges, so this is a bug if hit
        eprintln!("vine-teleop: command {} rejected by simulator: {e}", q.seq);
        return;
    }
    lock(&shared.applied).push(AppliedCommand {
        seq: q.seq,
        client: q.client,
        command: q.command,
        received: q.received,
        sim_time: sim.state().t,
    });
}
