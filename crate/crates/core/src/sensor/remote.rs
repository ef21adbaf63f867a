use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, TryLockError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::protocol::{self, ErrorToken, Request, Response};
use super::{simulated_reading, GroundTruth, Sensor, SensorError, SensorReading};

const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, Copy, Default)]
pub struct ServerOptions {
    /// Artificial delay per reading, held while the request is in flight.
    pub latency: Duration,
    /// Echo each request line to stderr.
    pub log_requests: bool,
}

/// Answers protocol lines from a ground truth. Readings are serialized: a
/// request arriving while another is in flight gets `ERR busy`.
#[derive(Debug)]
pub(crate) struct Responder {
    truth: GroundTruth,
    counter: Mutex<u64>,
    options: ServerOptions,
}

impl Responder {
    pub(crate) fn new(truth: GroundTruth, options: ServerOptions) -> Self {
        Responder {
            truth,
            counter: Mutex::new(0),
            options,
        }
    }

    pub(crate) fn respond(&self, line: &str) -> Response {
        if self.options.log_requests {
            // a closed stderr must not take the server down
            let _ = writeln!(std::io::stderr(), "request: {}", line.trim_end());
        }
        let Some(Request::Measure { x, y }) = protocol::parse_request(line) else {
            return Response::Err(ErrorToken::BadRequest);
        };
        let mut counter = match self.counter.try_lock() {
            Ok(guard) => guard,
            Err(TryLockError::WouldBlock) => return Response::Err(ErrorToken::Busy),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        if !self.truth.bounds.contains(x, y) {
            return Response::Err(ErrorToken::OutOfRange);
        }
        if !self.options.latency.is_zero() {
            thread::sleep(self.options.latency);
        }
        match simulated_reading(&self.truth, (x, y), *counter) {
            Ok(reading) => {
                *counter += 1;
                Response::Light(reading.value)
            }
            Err(_) => Response::Err(ErrorToken::OutOfRange),
        }
    }
}

/// A running TCP sensor service. Dropping it stops the accept loop.
pub struct SensorServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl SensorServer {
    pub fn bind(addr: &str, truth: GroundTruth, options: ServerOptions) -> Result<Self, SensorError> {
        let bind_err = |source| SensorError::BindFailure {
            addr: addr.to_string(),
            source,
        };
        let listener = TcpListener::bind(addr).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        let local = listener.local_addr().map_err(bind_err)?;
        let stop = Arc::new(AtomicBool::new(false));
        let responder = Arc::new(Responder::new(truth, options));
        let accept = {
            let stop = Arc::clone(&stop);
            thread::spawn(move || accept_loop(listener, responder, stop))
        };
        Ok(SensorServer {
            addr: local,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is stopped from another thread.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SensorServer {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn accept_loop(listener: TcpListener, responder: Arc<Responder>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let responder = Arc::clone(&responder);
                let stop = Arc::clone(&stop);
                thread::spawn(move || serve_connection(stream, &responder, &stop));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
}

fn serve_connection(stream: TcpStream, responder: &Responder, stop: &AtomicBool) {
    if stream.set_nonblocking(false).is_err() || stream.set_read_timeout(Some(Duration::from_millis(50))).is_err() {
        return;
    }
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => return,
            Ok(_) if buf.last() == Some(&b'\n') => {
                let line = String::from_utf8_lossy(&buf).into_owned();
                buf.clear();
                let reply = protocol::format_response(&responder.respond(&line));
                if writer.write_all(reply.as_bytes()).and_then(|_| writer.flush()).is_err() {
                    return;
                }
            }
            // partial line at EOF or timeout with partial data: keep reading
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
            }
            Err(_) => return,
        }
    }
}

/// Binds `addr` and serves readings of `truth` until the process exits.
pub fn serve_sensor(truth: GroundTruth, addr: &str, options: ServerOptions) -> Result<(), SensorError> {
    let server = SensorServer::bind(addr, truth, options)?;
    server.wait();
    Ok(())
}

/// Client for a TCP sensor service, holding one persistent connection.
#[derive(Debug)]
pub struct RemoteSensor {
    endpoint: String,
    timeout: Duration,
    conn: Option<(BufReader<TcpStream>, TcpStream)>,
}

impl RemoteSensor {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        RemoteSensor {
            endpoint: endpoint.into(),
            timeout,
            conn: None,
        }
    }

    fn connect(&self) -> Result<(BufReader<TcpStream>, TcpStream), SensorError> {
        let addrs: Vec<SocketAddr> = self
            .endpoint
            .to_socket_addrs()
            .map_err(|e| SensorError::ConnectionRefused(format!("{}: {e}", self.endpoint)))?
            .collect();
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(self.timeout))?;
                    stream.set_write_timeout(Some(self.timeout))?;
                    let _ = stream.set_nodelay(true);
                    let writer = stream.try_clone()?;
                    return Ok((BufReader::new(stream), writer));
                }
                Err(e) => last = Some(e),
            }
        }
        Err(match last {
            Some(e) if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
                SensorError::Timeout(self.timeout)
            }
            Some(e) => SensorError::ConnectionRefused(format!("{}: {e}", self.endpoint)),
            None => SensorError::ConnectionRefused(format!("{}: no address", self.endpoint)),
        })
    }

    fn exchange(&mut self, request: &str) -> Result<String, SensorError> {
        if self.conn.is_none() {
            self.conn = Some(self.connect()?);
        }
        let (reader, writer) = self.conn.as_mut().expect("connected above");
        let timeout = self.timeout;
        let io = |e: std::io::Error| match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => SensorError::Timeout(timeout),
            _ => SensorError::Io(e),
        };
        writer.write_all(request.as_bytes()).map_err(io)?;
        writer.flush().map_err(io)?;
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(io)?;
        if n == 0 || !line.ends_with('\n') {
            return Err(SensorError::Protocol("connection closed mid-response".into()));
        }
        Ok(line)
    }
}

impl Sensor for RemoteSensor {
    fn measure(&mut self, x: f64, y: f64) -> Result<SensorReading, SensorError> {
        let started = Instant::now();
        let line = match self.exchange(&protocol::format_request(x, y)) {
            Ok(line) => line,
            Err(e) => {
                // the stream may hold a late reply; start clean next time
                self.conn = None;
                return Err(e);
            }
        };
        let value = protocol::response_value(protocol::parse_response(&line)?, x, y)?;
        Ok(SensorReading {
            position: (x, y),
            value,
            latency: Some(started.elapsed()),
        })
    }
}
