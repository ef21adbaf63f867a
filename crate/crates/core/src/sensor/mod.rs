//! Measurement backends.
//!
//! [`SimulatedSensor`] reads a known ground-truth circle in-process.
//! [`RemoteSensor`] and [`FileDropSensor`] talk to a sensor service through
//! the line protocol in [`protocol`], over TCP or through request/result files
//! in a shared directory. Served readings travel with four fractional digits,
//! so every backend quantizes to that precision and all of them return
//! bit-identical values for the same seed.

use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::circle::{Circle, FieldBounds, Prior, SensorResponse};
use crate::error::{Error, Result};
use crate::rng;

mod file_drop;
pub mod protocol;
mod remote;

pub use file_drop::{serve_file_drop, FileDropSensor, REQUEST_FILE, RESULT_FILE};
pub use remote::{serve_sensor, RemoteSensor, SensorServer, ServerOptions};

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("position ({x}, {y}) is outside the field")]
    OutOfField { x: f64, y: f64 },
    #[error("sensor did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed sensor response: {0}")]
    Protocol(String),
    #[error("connection refused by {0}")]
    ConnectionRefused(String),
    #[error("sensor is busy with another request")]
    Busy,
    #[error("sensor rejected the request as malformed")]
    BadRequest,
    #[error("could not bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sensor transport: {0}")]
    Io(#[from] std::io::Error),
}

impl SensorError {
    /// Errors worth another attempt before giving up.
    pub fn is_transient(&self) -> bool {
        matches!(self, SensorError::Timeout(_) | SensorError::Busy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub position: (f64, f64),
    pub value: f64,
    pub latency: Option<Duration>,
}

/// Anything that can take a light reading at a field position.
pub trait Sensor {
    fn measure(&mut self, x: f64, y: f64) -> std::result::Result<SensorReading, SensorError>;
}

impl<S: Sensor + ?Sized> Sensor for Box<S> {
    fn measure(&mut self, x: f64, y: f64) -> std::result::Result<SensorReading, SensorError> {
        (**self).measure(x, y)
    }
}

/// The true white circle behind a simulated sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub circle: Circle,
    pub response: SensorResponse,
    pub bounds: FieldBounds,
    pub seed: u64,
}

impl GroundTruth {
    /// Checks that the circle lies in the prior support. Zero noise is
    /// accepted here for noise-free simulation even though the inference
    /// model needs `sigma > 0`.
    pub fn new(circle: Circle, response: SensorResponse, prior: &Prior, seed: u64) -> Result<Self> {
        prior.validate()?;
        if !prior.in_support(&circle) {
            return Err(Error::Config(format!(
                "true circle {circle:?} lies outside the prior support"
            )));
        }
        if !(response.d_white > response.d_black && response.sigma >= 0.0 && response.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "invalid ground-truth sensor response {response:?}"
            )));
        }
        Ok(GroundTruth {
            circle,
            response,
            bounds: prior.bounds,
            seed,
        })
    }
}

/// One noisy reading at `pos`: Normal about the white or black level.
pub fn measure_simulated<R: Rng + ?Sized>(
    gt: &GroundTruth,
    pos: (f64, f64),
    rng: &mut R,
) -> std::result::Result<SensorReading, SensorError> {
    let (x, y) = pos;
    if !gt.bounds.contains(x, y) {
        return Err(SensorError::OutOfField { x, y });
    }
    let mean = gt.response.mean(gt.circle.contains(x, y));
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    Ok(SensorReading {
        position: pos,
        value: mean + gt.response.sigma * z,
        latency: None,
    })
}

/// Reading noise for the `counter`-th served request of `gt`.
pub(crate) fn simulated_reading(
    gt: &GroundTruth,
    pos: (f64, f64),
    counter: u64,
) -> std::result::Result<SensorReading, SensorError> {
    measure_simulated(gt, pos, &mut rng::substream(gt.seed, counter))
}

/// Rounds a reading to its wire representation.
pub fn quantize_reading(value: f64) -> f64 {
    protocol::format_value(value).parse().unwrap_or(value)
}

/// Rounds a position coordinate to its wire representation.
pub fn quantize_coordinate(value: f64) -> f64 {
    protocol::format_coordinate(value).parse().unwrap_or(value)
}

/// In-process sensor. Request `k` (counting successful readings from zero)
/// draws its noise from substream `k` of the ground-truth seed.
#[derive(Debug, Clone)]
pub struct SimulatedSensor {
    truth: GroundTruth,
    counter: u64,
}

impl SimulatedSensor {
    pub fn new(truth: GroundTruth) -> Self {
        SimulatedSensor { truth, counter: 0 }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn readings_taken(&self) -> u64 {
        self.counter
    }
}

impl Sensor for SimulatedSensor {
    fn measure(&mut self, x: f64, y: f64) -> std::result::Result<SensorReading, SensorError> {
        let mut reading = simulated_reading(&self.truth, (x, y), self.counter)?;
        self.counter += 1;
        reading.value = quantize_reading(reading.value);
        Ok(reading)
    }
}
