use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use tungstenite::{Message, WebSocket};

use vine_core::protocol::{format_command, parse_command, ServerFrame};

use crate::server::Shared;

/// How long a silent client may take before it is assumed to speak plain
/// TCP rather than open a WebSocket handshake.
const SNIFF_TIMEOUT: Duration = Duration::from_millis(250);
const WS_POLL: Duration = Duration::from_millis(10);
const MAX_LINE: usize = 4096;

pub(crate) fn handle(stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_nodelay(true);
    let result = if is_websocket(&stream) {
        websocket_session(stream, &shared)
    } else {
        line_session(stream, &shared)
    };
    if let Err(e) = result {
        if !matches!(e.kind(), ErrorKind::ConnectionReset | ErrorKind::BrokenPipe) {
            eprintln!("vine-teleop: session ended: {e}");
        }
    }
}

fn is_websocket(stream: &TcpStream) -> bool {
    let deadline = Instant::now() + SNIFF_TIMEOUT;
    let mut buf = [0u8; 4];
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() || stream.set_read_timeout(Some(left)).is_err() {
            return false;
        }
        match stream.peek(&mut buf) {
            Ok(4) => return &buf == b"GET ",
            Ok(0) => return false,
            Ok(n) if !b"GET ".starts_with(&buf[..n]) => return false,
            Ok(_) => thread::sleep(Duration::from_millis(1)),
            Err(_) => return false,
        }
    }
}

/// Handles one operator line and returns the reply frame.
fn reply(line: &str, client: u64, shared: &Shared) -> Option<ServerFrame> {
    if line.trim().is_empty() {
        return None;
    }
    Some(match parse_command(line) {
        Ok(cmd) => match shared.submit(client, cmd) {
            Some(seq) => ServerFrame::Ack {
                seq,
                command: format_command(&cmd),
            },
            None => ServerFrame::Error {
                kind: "unavailable".into(),
                message: "simulator stopped".into(),
            },
        },
        Err(e) => ServerFrame::error(&e),
    })
}

fn line_session(stream: TcpStream, shared: &Arc<Shared>) -> io::Result<()> {
    stream.set_read_timeout(None)?;
    let (tx, rx) = unbounded::<String>();
    let id = shared.register(tx.clone(), Some(stream.try_clone()?));
    let writer = {
        let out = stream.try_clone()?;
        thread::Builder::new()
            .name("vine-writer".into())
            .spawn(move || write_lines(out, rx))?
    };
    let result = read_lines(&stream, id, &tx, shared);
    shared.unregister(id);
    drop(tx);
    let _ = writer.join();
    result
}

fn read_lines(stream: &TcpStream, id: u64, tx: &Sender<String>, shared: &Shared) -> io::Result<()> {
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.by_ref().take(MAX_LINE as u64).read_until(b'\n', &mut buf)?;
        if n == 0 || shared.stopped() {
            return Ok(());
        }
        let frame = if buf.last() != Some(&b'\n') && n == MAX_LINE {
            // drop the rest of the oversized line
            let mut rest = Vec::new();
            reader.read_until(b'\n', &mut rest)?;
            Some(ServerFrame::Error {
                kind: "line_too_long".into(),
                message: format!("lines are limited to {MAX_LINE} bytes"),
            })
        } else {
            reply(&String::from_utf8_lossy(&buf), id, shared)
        };
        if let Some(f) = frame {
            if tx.send(f.to_line()).is_err() {
                return Ok(());
            }
        }
    }
}

fn write_lines(mut out: TcpStream, rx: Receiver<String>) {
    for mut line in rx {
        line.push('\n');
        if out.write_all(line.as_bytes()).is_err() {
            // reader notices the dead socket on its own
            let _ = out.shutdown(std::net::Shutdown::Both);
            return;
        }
    }
}

fn websocket_session(stream: TcpStream, shared: &Arc<Shared>) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::new(ErrorKind::InvalidData, e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(WS_POLL))?;
    let (tx, rx) = unbounded::<String>();
    let id = shared.register(tx.clone(), None);
    let result = websocket_loop(&mut ws, id, &tx, &rx, shared);
    shared.unregister(id);
    let _ = ws.close(None);
    let _ = ws.flush();
    result
}

fn websocket_loop(
    ws: &mut WebSocket<TcpStream>,
    id: u64,
    tx: &Sender<String>,
    rx: &Receiver<String>,
    shared: &Shared,
) -> io::Result<()> {
    use tungstenite::Error as WsError;
    let fail = |e: WsError| io::Error::other(e.to_string());
    while !shared.stopped() {
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.as_str().lines() {
                    if let Some(f) = reply(line, id, shared) {
                        let _ = tx.send(f.to_line());
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                let f = ServerFrame::Error {
                    kind: "binary".into(),
                    message: "commands must be text messages".into(),
                };
                let _ = tx.send(f.to_line());
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(WsError::ConnectionClosed | WsError::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(fail(e)),
        }
        for line in rx.try_iter() {
            ws.send(Message::text(line)).map_err(fail)?;
        }
    }
    Ok(())
}
