use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use vine_core::protocol::{ServerFrame, TelemetryMessage};

/// Blocking line-protocol client, used by tests and the acceptance harness.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    partial: Vec<u8>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            partial: Vec::new(),
        })
    }

    /// Sends `line` followed by a newline.
    pub fn send(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(format!("{line}\n").as_bytes())
    }

    /// Writes raw bytes, for malformed-input tests.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.writer.write_all(bytes)
    }

    /// Next frame of any type, or `None` if nothing arrived within `timeout`.
    pub fn next_frame(&mut self, timeout: Duration) -> io::Result<Option<ServerFrame>> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.reader.get_ref().set_read_timeout(Some(left))?;
            match self.reader.read_until(b'\n', &mut self.partial) {
                Ok(0) => return Err(io::Error::new(ErrorKind::UnexpectedEof, "server closed the connection")),
                Ok(_) if self.partial.ends_with(b"\n") => {
                    let line = String::from_utf8_lossy(&self.partial).into_owned();
                    self.partial.clear();
                    return ServerFrame::parse(&line)
                        .map(Some)
                        .map_err(|e| io::Error::new(ErrorKind::InvalidData, e.to_string()));
                }
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
    }

    /// Next `ack` or `error` frame, skipping telemetry.
    pub fn next_reply(&mut self, timeout: Duration) -> io::Result<Option<ServerFrame>> {
        let deadline = Instant::now() + timeout;
        while let Some(f) = self.next_frame(deadline.saturating_duration_since(Instant::now()))? {
            if !matches!(f, ServerFrame::Telemetry(_)) {
                return Ok(Some(f));
            }
        }
        Ok(None)
    }

    /// Next telemetry frame, skipping everything else.
    pub fn next_telemetry(&mut self, timeout: Duration) -> io::Result<Option<TelemetryMessage>> {
        let deadline = Instant::now() + timeout;
        while let Some(f) = self.next_frame(deadline.saturating_duration_since(Instant::now()))? {
            if let ServerFrame::Telemetry(t) = f {
                return Ok(Some(t));
            }
        }
        Ok(None)
    }
}
