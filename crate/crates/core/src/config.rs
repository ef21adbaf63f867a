//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every key has a default
//! except `true_circle`. Unknown keys are rejected. [`RunConfig::to_effective`]
//! writes every key so the file alone reproduces a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::circle::Circle;
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SensorMode {
    Simulated,
    /// `host:port` of a sensor service.
    Remote(String),
    /// Directory used for the request/result file exchange.
    FileDrop(PathBuf),
}

impl SensorMode {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "simulated" {
            Ok(SensorMode::Simulated)
        } else if let Some(ep) = s.strip_prefix("remote:") {
            if ep
                .rsplit_once(':')
                .is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok())
            {
                Ok(SensorMode::Remote(ep.to_string()))
            } else {
                Err(format!("expected remote:HOST:PORT, found {s:?}"))
            }
        } else if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                Err("file: sensor needs a directory".into())
            } else {
                Ok(SensorMode::FileDrop(PathBuf::from(path)))
            }
        } else {
            Err(format!(
                "unknown sensor mode {s:?} (simulated | remote:HOST:PORT | file:DIR)"
            ))
        }
    }
}

impl std::fmt::Display for SensorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SensorMode::Simulated => f.write_str("simulated"),
            SensorMode::Remote(ep) => write!(f, "remote:{ep}"),
            SensorMode::FileDrop(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// Ground truth for simulation and serving.
    pub true_circle: Option<Circle>,
    pub sensor: SensorMode,
    pub timeout_ms: u64,
    /// Polling interval of the file-drop transport.
    pub poll_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentConfig::default(),
            true_circle: None,
            sensor: SensorMode::Simulated,
            timeout_ms: 5_000,
            poll_ms: 10,
        }
    }
}

pub const KEYS: &[&str] = &[
    "x_min",
    "x_max",
    "y_min",
    "y_max",
    "r_min",
    "r_max",
    "d_white",
    "d_black",
    "sigma",
    "true_circle",
    "n_live",
    "termination_frac",
    "walk_steps",
    "retry_limit",
    "max_iterations",
    "grid_spacing",
    "n_bins",
    "k_per_model",
    "ensemble_size",
    "tol_x0",
    "tol_y0",
    "tol_r",
    "max_measurements",
    "seed",
    "retries",
    "record_timing",
    "sensor",
    "timeout_ms",
    "poll_ms",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{key}: {e}"))
}

pub fn parse_circle(v: &str) -> std::result::Result<Circle, String> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("circle {v:?}: {e}"))?;
    match parts[..] {
        [x0, y0, r] => Ok(Circle::new(x0, y0, r)),
        _ => Err(format!("circle {v:?}: expected x0,y0,r")),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let e = &mut self.experiment;
        let v = value.trim();
        match key {
            "x_min" => e.prior.bounds.x_min = num(key, v)?,
            "x_max" => e.prior.bounds.x_max = num(key, v)?,
            "y_min" => e.prior.bounds.y_min = num(key, v)?,
            "y_max" => e.prior.bounds.y_max = num(key, v)?,
            "r_min" => e.prior.r_min = num(key, v)?,
            "r_max" => e.prior.r_max = num(key, v)?,
            "d_white" => e.response.d_white = num(key, v)?,
            "d_black" => e.response.d_black = num(key, v)?,
            "sigma" => e.response.sigma = num(key, v)?,
            "true_circle" => {
                self.true_circle = if v == "none" { None } else { Some(parse_circle(v)?) };
            }
            "n_live" => e.sampler.n_live = num(key, v)?,
            "termination_frac" => e.sampler.termination_frac = num(key, v)?,
            "walk_steps" => e.sampler.walk_steps = num(key, v)?,
            "retry_limit" => e.sampler.retry_limit = num(key, v)?,
            "max_iterations" => e.sampler.max_iterations = num(key, v)?,
            "grid_spacing" => e.inquiry.spacing = num(key, v)?,
            "n_bins" => e.inquiry.n_bins = num(key, v)?,
            "k_per_model" => e.inquiry.k_per_model = num(key, v)?,
            "ensemble_size" => e.ensemble_size = num(key, v)?,
            "tol_x0" => e.stopping.tol_x0 = num(key, v)?,
            "tol_y0" => e.stopping.tol_y0 = num(key, v)?,
            "tol_r" => e.stopping.tol_r = num(key, v)?,
            "max_measurements" => e.stopping.max_measurements = num(key, v)?,
            "seed" => e.seed = num(key, v)?,
            "retries" => e.retries = num(key, v)?,
            "record_timing" => e.record_timing = num(key, v)?,
            "sensor" => self.sensor = SensorMode::parse(v)?,
            "timeout_ms" => self.timeout_ms = num(key, v)?,
            "poll_ms" => self.poll_ms = num(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                what: "config",
                path: origin.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            cfg.set(key.trim(), value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        RunConfig::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if let Some(c) = self.true_circle {
            if !self.experiment.prior.in_support(&c) {
                return Err(Error::Config(format!(
                    "true_circle {c:?} lies outside the prior support"
                )));
            }
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn poll(&self) -> Duration {
        Duration::from_millis(self.poll_ms)
    }

    /// Every key with its effective value, in [`KEYS`] order.
    pub fn to_effective(&self) -> String {
        let e = &self.experiment;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("x_min", e.prior.bounds.x_min.to_string());
        put("x_max", e.prior.bounds.x_max.to_string());
        put("y_min", e.prior.bounds.y_min.to_string());
        put("y_max", e.prior.bounds.y_max.to_string());
        put("r_min", e.prior.r_min.to_string());
        put("r_max", e.prior.r_max.to_string());
        put("d_white", e.response.d_white.to_string());
        put("d_black", e.response.d_black.to_string());
        put("sigma", e.response.sigma.to_string());
        put(
            "true_circle",
            match self.true_circle {
                Some(c) => format!("{},{},{}", c.x0, c.y0, c.r),
                None => "none".into(),
            },
        );
        put("n_live", e.sampler.n_live.to_string());
        put("termination_frac", e.sampler.termination_frac.to_string());
        put("walk_steps", e.sampler.walk_steps.to_string());
        put("retry_limit", e.sampler.retry_limit.to_string());
        put("max_iterations", e.sampler.max_iterations.to_string());
        put("grid_spacing", e.inquiry.spacing.to_string());
        put("n_bins", e.inquiry.n_bins.to_string());
        put("k_per_model", e.inquiry.k_per_model.to_string());
        put("ensemble_size", e.ensemble_size.to_string());
        put("tol_x0", e.stopping.tol_x0.to_string());
        put("tol_y0", e.stopping.tol_y0.to_string());
        put("tol_r", e.stopping.tol_r.to_string());
        put("max_measurements", e.stopping.max_measurements.to_string());
        put("seed", e.seed.to_string());
        put("retries", e.retries.to_string());
        put("record_timing", e.record_timing.to_string());
        put("sensor", self.sensor.to_string());
        put("timeout_ms", self.timeout_ms.to_string());
        put("poll_ms", self.poll_ms.to_string());
        out
    }
}
