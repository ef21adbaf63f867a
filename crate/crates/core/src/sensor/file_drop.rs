//! Request/result file exchange through a shared directory.
//!
//! The client writes `request.txt` holding one `MEASURE` line and polls for
//! `result.txt` holding the response line. Both sides write to a temporary
//! name and rename, so a reader never sees a partial file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol;
use super::remote::{Responder, ServerOptions};
use super::{GroundTruth, Sensor, SensorError, SensorReading};

pub const REQUEST_FILE: &str = "request.txt";
pub const RESULT_FILE: &str = "result.txt";

fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(tmp, dir.join(name))
}

#[derive(Debug, Clone)]
pub struct FileDropSensor {
    dir: PathBuf,
    poll: Duration,
    timeout: Duration,
}

impl FileDropSensor {
    pub fn new(dir: impl Into<PathBuf>, poll: Duration, timeout: Duration) -> Self {
        FileDropSensor {
            dir: dir.into(),
            poll,
            timeout,
        }
    }
}

impl Sensor for FileDropSensor {
    fn measure(&mut self, x: f64, y: f64) -> Result<SensorReading, SensorError> {
        let started = Instant::now();
        let result = self.dir.join(RESULT_FILE);
        let _ = fs::remove_file(&result);
        write_atomic(&self.dir, REQUEST_FILE, &protocol::format_request(x, y))?;
        loop {
            match fs::read_to_string(&result) {
                Ok(line) => {
                    fs::remove_file(&result)?;
                    let value = protocol::response_value(protocol::parse_response(&line)?, x, y)?;
                    return Ok(SensorReading {
                        position: (x, y),
                        value,
                        latency: Some(started.elapsed()),
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
            if started.elapsed() >= self.timeout {
                let _ = fs::remove_file(self.dir.join(REQUEST_FILE));
                return Err(SensorError::Timeout(self.timeout));
            }
            thread::sleep(self.poll);
        }
    }
}

/// Serves readings through `dir` until `stop` is set.
pub fn serve_file_drop(
    truth: GroundTruth,
    dir: &Path,
    poll: Duration,
    options: ServerOptions,
    stop: &AtomicBool,
) -> Result<(), SensorError> {
    let responder = Responder::new(truth, options);
    let request = dir.join(REQUEST_FILE);
    while !stop.load(Ordering::SeqCst) {
        match fs::read_to_string(&request) {
            Ok(line) => {
                fs::remove_file(&request)?;
                let reply = protocol::format_response(&responder.respond(&line));
                write_atomic(dir, RESULT_FILE, &reply)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => thread::sleep(poll),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
