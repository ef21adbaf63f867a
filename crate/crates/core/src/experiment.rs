//! The closed measurement loop: select, measure, infer, repeat.
//!
//! Every random choice in iteration `k` is seeded from the master seed and
//! `k`, so a logged dataset can be re-inferred later and reproduce the
//! logged posterior summaries exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::circle::{Dataset, Prior, SensorResponse};
use crate::error::{Error, Result};
use crate::inquiry::{self, EntropyMap, InquiryConfig};
use crate::nested::{self, NestedRun, ParamSummary, PosteriorEnsemble, SamplerConfig};
use crate::rng::{derive_seed, Purpose};
use crate::sensor::{self, Sensor, SensorError};

/// Column order of the iteration log.
pub const LOG_HEADER: &str = "iteration,x,y,d,entropy,mean_x0,std_x0,mean_y0,std_y0,mean_r,std_r,log_z,ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub tol_x0: f64,
    pub tol_y0: f64,
    pub tol_r: f64,
    pub max_measurements: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            tol_x0: 0.5,
            tol_y0: 0.5,
            tol_r: 0.5,
            max_measurements: 100,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.tol_x0, self.tol_y0, self.tol_r];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config(format!(
                "stopping tolerances must be positive, got {tols:?}"
            )));
        }
        if self.max_measurements == 0 {
            return Err(Error::Config("max_measurements must be at least 1".into()));
        }
        Ok(())
    }

    /// True when every posterior standard deviation is within tolerance.
    pub fn satisfied_by(&self, s: &ParamSummary) -> bool {
        s.x0.std <= self.tol_x0 && s.y0.std <= self.tol_y0 && s.r.std <= self.tol_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub prior: Prior,
    pub response: SensorResponse,
    pub sampler: SamplerConfig,
    pub inquiry: InquiryConfig,
    pub ensemble_size: usize,
    pub stopping: StoppingRule,
    pub seed: u64,
    /// Extra attempts after a transient sensor failure.
    pub retries: usize,
    /// Record wall-clock milliseconds in the log. Off by default so logs
    /// are byte-reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            prior: Prior::default(),
            response: SensorResponse::default(),
            sampler: SamplerConfig::default(),
            inquiry: InquiryConfig::default(),
            ensemble_size: 150,
            stopping: StoppingRule::default(),
            seed: 0,
            retries: 3,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.response.validate()?;
        self.sampler.validate()?;
        self.inquiry.validate()?;
        self.stopping.validate()?;
        if self.ensemble_size < 2 {
            return Err(Error::Config(format!(
                "ensemble_size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentState {
    pub dataset: Dataset,
    pub ensemble: PosteriorEnsemble,
    pub summary: ParamSummary,
    pub iteration: usize,
    pub converged: bool,
    pub log_z: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub position: (f64, f64),
    pub value: f64,
    /// Predictive entropy at the chosen position.
    pub entropy: f64,
    /// Fraction of the pre-measurement ensemble that was white there.
    pub white_fraction: f64,
    pub summary: ParamSummary,
    pub log_z: f64,
    pub wall_ms: u64,
}

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        let s = &self.summary;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.position.0,
            self.position.1,
            self.value,
            self.entropy,
            s.x0.mean,
            s.x0.std,
            s.y0.mean,
            s.y0.std,
            s.r.mean,
            s.r.std,
            self.log_z,
            self.wall_ms
        )
    }

    /// Parses one log row; `white_fraction` is not logged and reads as NaN.
    pub fn from_csv_row(line: &str) -> std::result::Result<Self, String> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 13 {
            return Err(format!("expected 13 fields, found {}", f.len()));
        }
        let num = |i: usize| -> std::result::Result<f64, String> {
            f[i].parse::<f64>().map_err(|e| format!("field {}: {e}", i + 1))
        };
        let moments = |i: usize| -> std::result::Result<nested::Moments, String> {
            Ok(nested::Moments {
                mean: num(i)?,
                std: num(i + 1)?,
            })
        };
        Ok(IterationRecord {
            iteration: f[0].parse().map_err(|e| format!("iteration: {e}"))?,
            position: (num(1)?, num(2)?),
            value: num(3)?,
            entropy: num(4)?,
            white_fraction: f64::NAN,
            summary: ParamSummary {
                x0: moments(5)?,
                y0: moments(7)?,
                r: moments(9)?,
            },
            log_z: num(11)?,
            wall_ms: f[12].parse().map_err(|e| format!("ms: {e}"))?,
        })
    }
}

/// Initial state before any data: the posterior is the prior.
pub fn bootstrap(cfg: &ExperimentConfig) -> Result<ExperimentState> {
    cfg.validate()?;
    let ensemble = PosteriorEnsemble::from_prior(
        &cfg.prior,
        cfg.ensemble_size,
        derive_seed(cfg.seed, Purpose::Bootstrap, 0),
    )?;
    let summary = nested::summarize(&ensemble);
    Ok(ExperimentState {
        dataset: Dataset::new(),
        ensemble,
        summary,
        iteration: 0,
        converged: false,
        log_z: 0.0,
        seed: cfg.seed,
    })
}

/// Nested sampling plus resampling for a dataset, seeded by its size.
pub fn infer(data: &Dataset, cfg: &ExperimentConfig) -> Result<(PosteriorEnsemble, NestedRun)> {
    let k = data.len() as u64;
    let run = nested::run_nested(
        data,
        &cfg.response,
        &cfg.prior,
        &cfg.sampler,
        derive_seed(cfg.seed, Purpose::Nested, k),
    )?;
    let ensemble = nested::resample_ensemble(&run, cfg.ensemble_size, derive_seed(cfg.seed, Purpose::Resample, k))?;
    Ok((ensemble, run))
}

/// Result of one loop iteration.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: ExperimentState,
    pub record: IterationRecord,
    pub map: EntropyMap,
}

fn measure_with_retries<S: Sensor + ?Sized>(
    sensor: &mut S,
    pos: (f64, f64),
    retries: usize,
) -> std::result::Result<f64, SensorError> {
    let mut attempt = 0;
    loop {
        match sensor.measure(pos.0, pos.1) {
            Ok(r) if r.value.is_finite() => return Ok(r.value),
            Ok(r) => return Err(SensorError::Protocol(format!("non-finite reading {}", r.value))),
            Err(e) if e.is_transient() && attempt < retries => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Chooses the next position, measures it, and re-runs inference.
pub fn step<S: Sensor + ?Sized>(state: &ExperimentState, sensor: &mut S, cfg: &ExperimentConfig) -> Result<Step> {
    if state.converged {
        return Err(Error::Config("experiment already converged".into()));
    }
    if state.iteration >= cfg.stopping.max_measurements {
        return Err(Error::Config(format!(
            "measurement budget of {} exhausted",
            cfg.stopping.max_measurements
        )));
    }
    let started = Instant::now();
    let k = state.iteration + 1;
    let (best, map) = inquiry::select_measurement(
        &state.ensemble,
        &cfg.response,
        &cfg.prior.bounds,
        &cfg.inquiry,
        derive_seed(cfg.seed, Purpose::Grid, k as u64),
    )?;
    // positions travel with wire precision, so every backend sees the same point
    let pos = (
        sensor::quantize_coordinate(best.0).clamp(cfg.prior.bounds.x_min, cfg.prior.bounds.x_max),
        sensor::quantize_coordinate(best.1).clamp(cfg.prior.bounds.y_min, cfg.prior.bounds.y_max),
    );
    let white_fraction = state.ensemble.white_fraction(pos.0, pos.1);
    let value = measure_with_retries(sensor, pos, cfg.retries)?;

    let mut dataset = state.dataset.clone();
    dataset.push(pos.0, pos.1, value);
    let (ensemble, run) = infer(&dataset, cfg)?;
    let summary = nested::summarize(&ensemble);
    let converged = cfg.stopping.satisfied_by(&summary);
    let wall_ms = if cfg.record_timing {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    let record = IterationRecord {
        iteration: k,
        position: pos,
        value,
        entropy: map.best_entropy,
        white_fraction,
        summary,
        log_z: run.log_z,
        wall_ms,
    };
    Ok(Step {
        state: ExperimentState {
            dataset,
            ensemble,
            summary,
            iteration: k,
            converged,
            log_z: run.log_z,
            seed: state.seed,
        },
        record,
        map,
    })
}

/// Writes the per-iteration files of a run into one directory.
#[derive(Debug, Clone)]
pub struct ArtifactWriter {
    dir: PathBuf,
    log: String,
}

impl ArtifactWriter {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let w = ArtifactWriter {
            dir,
            log: format!("{LOG_HEADER}\n"),
        };
        w.flush_log()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("log.csv")
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    fn flush_log(&self) -> Result<()> {
        self.write("log.csv", self.log.as_bytes())
    }

    pub fn record(&mut self, step: &Step) -> Result<()> {
        let k = step.record.iteration;
        let _ = writeln!(self.log, "{}", step.record.csv_row());
        self.flush_log()?;
        self.write(
            &format!("iter_{k}_ensemble.csv"),
            step.state.ensemble.to_csv().as_bytes(),
        )?;
        self.write(&format!("iter_{k}_entropy.pgm"), &step.map.to_pgm())?;
        self.write(&format!("iter_{k}_entropy.txt"), step.map.sidecar().as_bytes())
    }
}

/// Iterates [`step`] until convergence or the measurement budget runs out.
/// Running out of budget is not an error; check `converged` on the result.
pub fn run_experiment<S: Sensor + ?Sized>(
    cfg: &ExperimentConfig,
    sensor: &mut S,
    mut artifacts: Option<&mut ArtifactWriter>,
) -> Result<(ExperimentState, Vec<IterationRecord>)> {
    let mut state = bootstrap(cfg)?;
    let mut records = Vec::new();
    while !state.converged && state.iteration < cfg.stopping.max_measurements {
        let next = step(&state, sensor, cfg)?;
        if let Some(w) = artifacts.as_deref_mut() {
            w.record(&next)?;
        }
        records.push(next.record);
        state = next.state;
    }
    Ok((state, records))
}

/// Reads an iteration log written by [`ArtifactWriter`].
pub fn read_log(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        what: "iteration log",
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == LOG_HEADER => {}
        Some(h) => return Err(parse_err(1, format!("unexpected header {h:?}"))),
        None => return Err(parse_err(1, "missing header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = IterationRecord::from_csv_row(line).map_err(|r| parse_err(i + 2, r))?;
        if rec.iteration != out.len() + 1 {
            return Err(parse_err(
                i + 2,
                format!("expected iteration {}, found {}", out.len() + 1, rec.iteration),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Posterior summary after `iteration` logged measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayRow {
    pub iteration: usize,
    pub summary: ParamSummary,
    pub log_z: f64,
}

/// Re-runs inference over each logged prefix without touching a sensor.
/// An empty log yields the prior summary.
pub fn replay(records: &[IterationRecord], cfg: &ExperimentConfig) -> Result<Vec<ReplayRow>> {
    if records.is_empty() {
        let state = bootstrap(cfg)?;
        return Ok(vec![ReplayRow {
            iteration: 0,
            summary: state.summary,
            log_z: state.log_z,
        }]);
    }
    cfg.validate()?;
    let mut data = Dataset::new();
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        data.push(rec.position.0, rec.position.1, rec.value);
        let (ensemble, run) = infer(&data, cfg)?;
        rows.push(ReplayRow {
            iteration: rec.iteration,
            summary: nested::summarize(&ensemble),
            log_z: run.log_z,
        });
    }
    Ok(rows)
}
