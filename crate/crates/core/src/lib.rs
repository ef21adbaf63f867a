//! Autonomous measurement instrument for locating a white circle on a black
//! field from point light readings.
//!
//! The learning cycle has two engines:
//!
//! - [`nested`] infers the circle parameters from the readings collected so
//!   far with nested sampling, and resamples the weighted output into an
//!   equally weighted [`PosteriorEnsemble`].
//! - [`inquiry`] scores candidate measurement positions by the entropy of the
//!   predictive distribution implied by that ensemble and picks the maximum.
//!
//! [`experiment`] closes the loop against a [`sensor::Sensor`] until the
//! posterior spread falls below the configured tolerances.

pub mod circle;
pub mod config;
pub mod error;
pub mod experiment;
pub mod inquiry;
pub mod nested;
pub mod rng;
pub mod sensor;

pub use circle::{Circle, Dataset, FieldBounds, Measurement, Prior, SensorResponse};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentState, IterationRecord, StoppingRule};
pub use inquiry::{CandidateGrid, EntropyMap, InquiryConfig};
pub use nested::{NestedRun, ParamSummary, PosteriorEnsemble, SamplerConfig};
