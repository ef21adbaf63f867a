//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.
//!
//! cargo test -p instrument-core --test acceptance

mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use instrument::circle::{Circle, Dataset, Prior, SensorResponse};
use instrument::experiment::{self, run_experiment, ExperimentConfig, IterationRecord};
use instrument::inquiry::{self, binned_entropy, histogram_entropy, InquiryConfig};
use instrument::nested::{self, PosteriorEnsemble};
use instrument::rng;
use instrument::sensor::{self, GroundTruth, RemoteSensor, Sensor, SensorServer, ServerOptions, SimulatedSensor};
use rand::Rng;

// AC1
const EVIDENCE_RUNS: u64 = 100;
const EVIDENCE_GRID: [usize; 3] = [40, 60, 28];
const EVIDENCE_FLOOR: f64 = 0.2;
const EVIDENCE_PASS_FRAC: f64 = 0.95;
// AC2 / AC5
const TRIALS: u64 = 200;
const MEDIAN_MAX: f64 = 30.0;
const WITHIN_60_FRAC: f64 = 0.90;
const RASTER_COUNT: usize = 600;
const REDUCTION: f64 = 10.0;
const CALIBRATION_SIGMAS: f64 = 3.0;
const CALIBRATION_FRAC: f64 = 0.95;
// AC3
const BINARY_RUNS: usize = 50;
const SPLIT_BAND: (f64, f64) = (0.25, 0.75);
const SPLIT_FRAC: f64 = 0.60;
// AC4
const LOG2_TOL: f64 = 0.02;
const HISTOGRAM_ORACLE_TOL: f64 = 0.05;

const TRUE_CIRCLE: Circle = Circle::new(10.0, 15.0, 5.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ac1_evidence_oracle() -> Outcome {
    let prior = Prior::default();
    let s = SensorResponse::default();
    let cfg = nested::SamplerConfig::default();
    let mut ok = 0;
    let mut worst = 0.0f64;
    for seed in 0..EVIDENCE_RUNS {
        let mut g = rng::substream(seed, 77);
        let truth = prior.sample(&mut g);
        let gt = GroundTruth::new(truth, s, &prior, seed).unwrap();
        let n_meas = 1 + (seed % 3) as usize;
        let mut data = Dataset::new();
        for _ in 0..n_meas {
            let pos = (g.gen_range(0.0..20.0), g.gen_range(0.0..30.0));
            let v = sensor::measure_simulated(&gt, pos, &mut g).unwrap().value;
            data.push(pos.0, pos.1, v);
        }
        let run = nested::run_nested(&data, &s, &prior, &cfg, seed).unwrap();
        let oracle = common::grid_log_evidence(&data, &s, &prior, EVIDENCE_GRID);
        let tol = (3.0 * run.log_z_err).max(EVIDENCE_FLOOR);
        let err = (run.log_z - oracle).abs();
        worst = worst.max(err / tol);
        if err <= tol {
            ok += 1;
        }
    }
    let frac = ok as f64 / EVIDENCE_RUNS as f64;
    outcome(
        frac >= EVIDENCE_PASS_FRAC,
        format!(
            "{ok}/{EVIDENCE_RUNS} runs within max(3*sqrt(H/n_live), 0.2) of grid quadrature (worst err/tol {worst:.2})"
        ),
    )
}

struct Trial {
    converged: bool,
    measurements: usize,
    records: Vec<IterationRecord>,
    summary: nested::ParamSummary,
}

fn run_trials(n: u64) -> Vec<Trial> {
    (0..n)
        .map(|seed| {
            let cfg = ExperimentConfig {
                seed,
                ..ExperimentConfig::default()
            };
            let gt = GroundTruth::new(TRUE_CIRCLE, cfg.response, &cfg.prior, seed).unwrap();
            let (state, records) = run_experiment(&cfg, &mut SimulatedSensor::new(gt), None).unwrap();
            Trial {
                converged: state.converged,
                measurements: state.iteration,
                records,
                summary: state.summary,
            }
        })
        .collect()
}

fn ac2_convergence(trials: &[Trial]) -> Outcome {
    let mut counts: Vec<usize> = trials.iter().map(|t| t.measurements).collect();
    let med = common::median(&mut counts);
    let within_60 = trials.iter().filter(|t| t.converged && t.measurements <= 60).count();
    let frac = within_60 as f64 / trials.len() as f64;
    let slow = trials
        .iter()
        .filter(|t| t.converged && (RASTER_COUNT as f64 / t.measurements as f64) < REDUCTION)
        .count();
    let max = counts.iter().max().copied().unwrap_or(0);
    outcome(
        med <= MEDIAN_MAX && frac >= WITHIN_60_FRAC && slow == 0,
        format!(
            "median {med} measurements, {:.1}% converged within 60, max {max}, {slow} converged runs short of 10x vs {RASTER_COUNT}-point raster",
            100.0 * frac
        ),
    )
}

fn ac3_binary_questions(trials: &[Trial]) -> Outcome {
    let mid = SensorResponse::default().midpoint();
    let (mut inside, mut total) = (0usize, 0usize);
    for t in trials.iter().take(BINARY_RUNS) {
        let Some(first_white) = t.records.iter().position(|r| r.value > mid) else {
            continue;
        };
        for r in &t.records[first_white + 1..] {
            total += 1;
            if r.white_fraction >= SPLIT_BAND.0 && r.white_fraction <= SPLIT_BAND.1 {
                inside += 1;
            }
        }
    }
    let frac = inside as f64 / total.max(1) as f64;
    outcome(
        total > 0 && frac >= SPLIT_FRAC,
        format!(
            "{inside}/{total} post-white-hit selections had ensemble white-fraction in [0.25, 0.75] ({:.1}%)",
            100.0 * frac
        ),
    )
}

fn ac4_entropy_invariants() -> Outcome {
    let cfg = ExperimentConfig::default();
    let max_h = (cfg.inquiry.n_bins as f64).ln();
    let mut checked = 0usize;
    let mut bounded = true;
    // every map along a few real trajectories
    for seed in 0..3 {
        let cfg = ExperimentConfig { seed, ..cfg };
        let gt = GroundTruth::new(TRUE_CIRCLE, cfg.response, &cfg.prior, seed).unwrap();
        let mut sensor = SimulatedSensor::new(gt);
        let mut state = experiment::bootstrap(&cfg).unwrap();
        while !state.converged && state.iteration < 40 {
            let step = experiment::step(&state, &mut sensor, &cfg).unwrap();
            checked += step.map.entropies.len();
            bounded &= step.map.entropies.iter().all(|&h| (0.0..=max_h).contains(&h));
            state = step.state;
        }
    }

    // synthetic split ensembles in the noise-free limit
    let noiseless = SensorResponse {
        sigma: 1e-9,
        ..SensorResponse::default()
    };
    let probe = (5.5, 5.5);
    let split_at = |white: usize| {
        let circles = (0..40)
            .map(|i| {
                if i < white {
                    Circle::new(5.0, 5.0, 2.0)
                } else {
                    Circle::new(18.0, 28.0, 1.0)
                }
            })
            .collect();
        let e = PosteriorEnsemble::new(circles, 0).unwrap();
        let grid = inquiry::lattice(&cfg.prior.bounds, 1.0, (0.0, 0.0), 0).unwrap();
        let map = inquiry::entropy_map(&e, &noiseless, grid, &InquiryConfig::default(), 1).unwrap();
        let idx = map.grid.points.iter().position(|&p| p == probe).unwrap();
        map.entropies[idx]
    };
    let (h0, h_half, h1) = (split_at(0), split_at(20), split_at(40));
    let split_ok = (h_half - 2f64.ln()).abs() <= LOG2_TOL && h0 == 0.0 && h1 == 0.0;

    // histogram against numerically integrated binned mixture
    let mut g = rng::seeded(2024);
    let sigma = 0.06;
    let values: Vec<f64> = (0..100_000)
        .map(|i| {
            let m = if i % 2 == 0 { 0.2 } else { 0.8 };
            m + sigma * g.sample::<f64, _>(rand_distr::StandardNormal)
        })
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h_hist = histogram_entropy(&values, 32);
    let h_oracle = common::binned_mixture_entropy(0.2, 0.8, sigma, lo, hi, 32);
    let hist_ok = (h_hist - h_oracle).abs() <= HISTOGRAM_ORACLE_TOL && binned_entropy(&values, 32, lo, hi) == h_hist;

    outcome(
        bounded && split_ok && hist_ok,
        format!(
            "{checked} map entropies in [0, ln 16]: {bounded}; split f=0/0.5/1 -> {h0:.4}/{h_half:.4}/{h1:.4}; histogram {h_hist:.4} vs oracle {h_oracle:.4}"
        ),
    )
}

fn ac5_calibration(trials: &[Trial]) -> Outcome {
    let truth = TRUE_CIRCLE.to_array();
    let mut hits = [0usize; 3];
    let converged: Vec<&Trial> = trials.iter().filter(|t| t.converged).collect();
    for t in &converged {
        for (d, m) in t.summary.as_array().iter().enumerate() {
            if (m.mean - truth[d]).abs() <= CALIBRATION_SIGMAS * m.std {
                hits[d] += 1;
            }
        }
    }
    let n = converged.len().max(1) as f64;
    let fracs = hits.map(|h| h as f64 / n);
    outcome(
        !converged.is_empty() && fracs.iter().all(|f| *f >= CALIBRATION_FRAC),
        format!(
            "true value within mean +/- 3 std over {} converged trials: x0 {:.1}%, y0 {:.1}%, r {:.1}%",
            converged.len(),
            100.0 * fracs[0],
            100.0 * fracs[1],
            100.0 * fracs[2]
        ),
    )
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn ac6_determinism_and_replay() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_instrument");
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let status = Command::new(bin)
            .args(["simulate", "--seed", "7", "--true-circle", "10,15,5", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.code().is_some());
    }
    let (fa, fb) = (dir_files(&a), dir_files(&b));
    let identical = !fa.is_empty() && fa == fb;

    let replay = Command::new(bin)
        .args(["replay", "--log"])
        .arg(a.join("log.csv"))
        .output()
        .unwrap();
    let replay_ok = replay.status.success();

    // library-level bit comparison as well
    let records = experiment::read_log(&a.join("log.csv")).unwrap();
    let cfg = instrument::config::RunConfig::load(&a.join("config.effective")).unwrap();
    let rows = experiment::replay(&records, &cfg.experiment).unwrap();
    let bits_ok = records
        .iter()
        .zip(&rows)
        .all(|(rec, row)| rec.summary == row.summary && rec.log_z.to_bits() == row.log_z.to_bits())
        && rows.len() == records.len();

    outcome(
        identical && replay_ok && bits_ok,
        format!(
            "{} artifact files byte-identical across runs: {identical}; replay of {} rows exit ok: {replay_ok}, bit-identical: {bits_ok}",
            fa.len(),
            records.len()
        ),
    )
}

fn ac7_protocol() -> Outcome {
    let prior = Prior::default();
    let s = SensorResponse::default();
    let gt = GroundTruth::new(TRUE_CIRCLE, s, &prior, 31).unwrap();
    let server = SensorServer::bind("127.0.0.1:0", gt, ServerOptions::default()).unwrap();
    let addr = server.local_addr().to_string();

    let mut remote = RemoteSensor::new(addr.clone(), Duration::from_secs(5));
    let mut local = SimulatedSensor::new(gt);
    let mut g = rng::seeded(5);
    let mut equal = true;
    for _ in 0..100 {
        let pos = (
            sensor::quantize_coordinate(g.gen_range(0.0..20.0)),
            sensor::quantize_coordinate(g.gen_range(0.0..30.0)),
        );
        let r = remote.measure(pos.0, pos.1).unwrap().value;
        let l = local.measure(pos.0, pos.1).unwrap().value;
        equal &= r.to_bits() == l.to_bits();
    }
    drop(server);

    // raw protocol checks on one persistent connection
    let server = SensorServer::bind("127.0.0.1:0", gt, ServerOptions::default()).unwrap();
    let stream = TcpStream::connect(server.local_addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let mut ask = |line: &str| {
        writer.write_all(line.as_bytes()).unwrap();
        let mut resp = String::new();
        reader.read_line(&mut resp).unwrap();
        resp
    };
    let bad = ask("MEASURE x\n");
    let after_bad = ask("MEASURE 10.000 15.000\n");
    let out = ask("MEASURE 25.000 15.000\n");
    let raw_ok = bad == "ERR bad_request\n" && after_bad.starts_with("LIGHT ") && out == "ERR out_of_range\n";
    drop(server);

    // whole trajectory over the wire
    let cfg = ExperimentConfig {
        seed: 31,
        ..ExperimentConfig::default()
    };
    let server = SensorServer::bind("127.0.0.1:0", gt, ServerOptions::default()).unwrap();
    let mut remote = RemoteSensor::new(server.local_addr().to_string(), Duration::from_secs(5));
    let (_, over_wire) = run_experiment(&cfg, &mut remote, None).unwrap();
    let (_, in_process) = run_experiment(&cfg, &mut SimulatedSensor::new(gt), None).unwrap();
    let rows = |rs: &[IterationRecord]| rs.iter().map(IterationRecord::csv_row).collect::<Vec<_>>();
    let trajectory_ok = rows(&over_wire) == rows(&in_process);

    outcome(
        equal && raw_ok && trajectory_ok,
        format!(
            "100 loopback readings bit-identical: {equal}; bad_request then usable, out_of_range: {raw_ok}; {}-step trajectory identical over TCP: {trajectory_ok}",
            over_wire.len()
        ),
    )
}

fn main() {
    // libtest flags (e.g. --nocapture, filters) are accepted and ignored
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut timed = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        o.detail = format!("{} [{:.1?}]", o.detail, t.elapsed());
        let line = format!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        println!("{line}");
        results.push((name, o));
    };

    timed("AC1 evidence oracle equivalence", &mut ac1_evidence_oracle);
    let trials = run_trials(TRIALS);
    timed("AC2 convergence efficiency", &mut || ac2_convergence(&trials));
    timed("AC3 binary-question property", &mut || ac3_binary_questions(&trials));
    timed("AC4 entropy invariant suite", &mut ac4_entropy_invariants);
    timed("AC5 posterior calibration", &mut || ac5_calibration(&trials));
    timed("AC6 determinism and replay", &mut ac6_determinism_and_replay);
    timed("AC7 protocol conformance", &mut ac7_protocol);

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1?}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
