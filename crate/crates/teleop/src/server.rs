use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use crossbeam_channel::{unbounded, Sender};
use serde::{Deserialize, Serialize};

use vine_core::environment::presets;
use vine_core::protocol::{CommandMessage, ServerFrame, TelemetryMessage};
use vine_core::simulator::Simulator;

use crate::sim_loop::{self, Queued};
use crate::{session, TeleopConfig, TeleopError};

const ACCEPT_POLL: Duration = Duration::from_millis(5);

/// A command as the simulator received it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedCommand {
    pub seq: u64,
    pub client: u64,
    pub command: CommandMessage,
    /// Server time the line arrived, s.
    pub received: f64,
    /// Simulation time it took effect, s.
    pub sim_time: f64,
}

pub(crate) struct ClientSlot {
    pub id: u64,
    pub tx: Sender<String>,
    /// Kept to unblock the reader on shutdown; `None` for WebSocket clients,
    /// which poll the stop flag.
    pub stream: Option<TcpStream>,
}

pub(crate) struct Sequencer {
    next: u64,
    tx: Sender<Queued>,
}

pub(crate) struct Shared {
    pub stop: AtomicBool,
    pub started: Instant,
    pub telemetry: ArcSwap<TelemetryMessage>,
    pub applied: Mutex<Vec<AppliedCommand>>,
    pub clients: Mutex<Vec<ClientSlot>>,
    pub sequencer: Mutex<Sequencer>,
    pub next_client: AtomicU64,
}

// A panicking thread must not take the whole session down with it.
pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    /// Numbers `command` and queues it for the simulator. Numbering and
    /// queueing happen under one lock, so queue order equals number order.
    pub fn submit(&self, client: u64, command: CommandMessage) -> Option<u64> {
        let received = self.elapsed();
        let mut seq = lock(&self.sequencer);
        seq.next += 1;
        let n = seq.next;
        seq.tx
            .send(Queued {
                seq: n,
                client,
                command,
                received,
            })
            .ok()
            .map(|_| n)
    }

    pub fn register(&self, tx: Sender<String>, stream: Option<TcpStream>) -> u64 {
        let id = self.next_client.fetch_add(1, Ordering::Relaxed) + 1;
        lock(&self.clients).push(ClientSlot { id, tx, stream });
        id
    }

    pub fn unregister(&self, id: u64) {
        lock(&self.clients).retain(|c| c.id != id);
    }
}

/// Running session. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Commands applied so far, in application order.
    pub fn applied(&self) -> Vec<AppliedCommand> {
        lock(&self.shared.applied).clone()
    }

    /// Latest telemetry snapshot.
    pub fn telemetry(&self) -> TelemetryMessage {
        (**self.shared.telemetry.load()).clone()
    }

    pub fn client_count(&self) -> usize {
        lock(&self.shared.clients).len()
    }

    /// Blocks until the session stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        for c in lock(&self.shared.clients).iter() {
            if let Some(s) = &c.stream {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

/// Binds `cfg.bind` and starts the acceptor, simulator and broadcaster
/// threads. Port 0 picks a free port; see [`ServerHandle::local_addr`].
pub fn serve(cfg: &TeleopConfig) -> Result<ServerHandle, TeleopError> {
    cfg.validate()?;
    let network = presets::by_name(&cfg.preset)?;
    let sim = Simulator::with_initial_length(network, cfg.sim, cfg.seed, cfg.initial_length)?;
    let listener = TcpListener::bind(&cfg.bind).map_err(|source| TeleopError::Bind {
        addr: cfg.bind.clone(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let (tx, rx) = unbounded();
    let shared = Arc::new(Shared {
        stop: AtomicBool::new(false),
        started: Instant::now(),
        telemetry: ArcSwap::from_pointee(TelemetryMessage::from_state(sim.state())),
        applied: Mutex::new(Vec::new()),
        clients: Mutex::new(Vec::new()),
        sequencer: Mutex::new(Sequencer { next: 0, tx }),
        next_client: AtomicU64::new(0),
    });

    let environment = (cfg.preset == "burrow-field")
        .then_some((presets::BURROW_TEMPERATURE_C, presets::BURROW_HUMIDITY_PCT));
    let loop_cfg = sim_loop::LoopConfig {
        time_scale: cfg.time_scale,
        environment,
    };
    let period = Duration::from_secs_f64(1.0 / cfg.telemetry_hz);

    let threads = vec![
        spawn("vine-sim", {
            let shared = shared.clone();
            move || sim_loop::run(sim, rx, shared, loop_cfg)
        })?,
        spawn("vine-broadcast", {
            let shared = shared.clone();
            move || broadcast(shared, period)
        })?,
        spawn("vine-accept", {
            let shared = shared.clone();
            move || accept(listener, shared)
        })?,
    ];
    Ok(ServerHandle { addr, shared, threads })
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> std::io::Result<JoinHandle<()>> {
    thread::Builder::new().name(name.to_string()).spawn(f)
}

fn accept(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stopped() {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                let spawned = spawn("vine-session", move || session::handle(stream, shared));
                if let Err(e) = spawned {
                    eprintln!("vine-teleop: cannot start session: {e}");
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                eprintln!("vine-teleop: accept failed: {e}");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
}

/// Sends the latest snapshot to every client on an absolute schedule, so
/// late wake-ups do not accumulate drift.
fn broadcast(shared: Arc<Shared>, period: Duration) {
    let start = Instant::now();
    let mut k: u32 = 1;
    loop {
        let deadline = start + period * k;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
        if shared.stopped() {
            return;
        }
        let line = ServerFrame::Telemetry((**shared.telemetry.load()).clone()).to_line();
        for c in lock(&shared.clients).iter() {
            let _ = c.tx.send(line.clone());
        }
        // skip missed slots rather than bursting to catch up
        let behind = (start.elapsed().as_secs_f64() / period.as_secs_f64()) as u32;
        k = (k + 1).max(behind + 1);
    }
}
