use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use instrument::circle::Dataset;
use instrument::config::{parse_circle, RunConfig, SensorMode};
use instrument::experiment::{self, ArtifactWriter, ExperimentState};
use instrument::inquiry;
use instrument::nested::{self, ParamSummary};
use instrument::sensor::{self, FileDropSensor, GroundTruth, RemoteSensor, Sensor, ServerOptions, SimulatedSensor};
use instrument::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "instrument", version, about = "Autonomous circle-finding instrument")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the measurement loop against a simulated or remote sensor.
    Simulate(SimulateArgs),
    /// Serve simulated readings over TCP or a file-drop directory.
    Serve(ServeArgs),
    /// Re-run inference over a logged run and check its summaries.
    Replay(ReplayArgs),
    /// Compare a raster scan against the adaptive loop.
    Baseline(BaselineArgs),
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set sigma=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    shared: Shared,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// True circle as `x0,y0,r`.
    #[arg(long)]
    true_circle: Option<String>,
    /// `simulated`, `remote:HOST:PORT` or `file:DIR`.
    #[arg(long)]
    sensor: Option<String>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    true_circle: Option<String>,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// Serve through this directory instead of TCP.
    #[arg(long)]
    file_drop: Option<PathBuf>,
    /// Artificial delay per reading in milliseconds.
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[command(flatten)]
    shared: Shared,
    /// Iteration log of a previous run.
    #[arg(long)]
    log: PathBuf,
    /// Write the replayed summaries here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    true_circle: Option<String>,
    /// Raster spacing in cm.
    #[arg(long, default_value_t = 1.0)]
    raster_spacing: f64,
    /// Number of matched seeds, starting at the master seed.
    #[arg(long, default_value_t = 1)]
    trials: u64,
}

fn load_config(shared: &Shared, fallback: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match (&shared.config, fallback) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(path)) if path.exists() => RunConfig::load(path)?,
        _ => RunConfig::default(),
    };
    for o in &shared.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, found {o:?}")))?;
        cfg.set(k.trim(), v).map_err(Error::Config)?;
    }
    if let Some(seed) = shared.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn apply_truth(cfg: &mut RunConfig, arg: &Option<String>) -> Result<()> {
    if let Some(s) = arg {
        cfg.true_circle = Some(parse_circle(s).map_err(Error::Config)?);
    }
    Ok(())
}

fn ground_truth(cfg: &RunConfig) -> Result<GroundTruth> {
    let circle = cfg
        .true_circle
        .ok_or_else(|| Error::Config("true_circle is required (config key or --true-circle)".into()))?;
    GroundTruth::new(
        circle,
        cfg.experiment.response,
        &cfg.experiment.prior,
        cfg.experiment.seed,
    )
}

fn summary_lines(out: &mut String, prefix: &str, s: &ParamSummary) {
    for (name, m) in [("x0", s.x0), ("y0", s.y0), ("r", s.r)] {
        let _ = writeln!(out, "{prefix}mean_{name} = {}", m.mean);
        let _ = writeln!(out, "{prefix}std_{name} = {}", m.std);
    }
}

fn final_summary(cfg: &RunConfig, state: &ExperimentState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "converged = {}", state.converged);
    let _ = writeln!(out, "measurements = {}", state.iteration);
    summary_lines(&mut out, "", &state.summary);
    let _ = writeln!(out, "log_z = {}", state.log_z);
    if let Some(c) = cfg.true_circle {
        let _ = writeln!(out, "true_circle = {},{},{}", c.x0, c.y0, c.r);
    }
    out
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.shared, None)?;
    apply_truth(&mut cfg, &args.true_circle)?;
    if let Some(s) = &args.sensor {
        cfg.sensor = SensorMode::parse(s).map_err(Error::Config)?;
    }
    cfg.validate()?;
    let mut sensor: Box<dyn Sensor> = match &cfg.sensor {
        SensorMode::Simulated => Box::new(SimulatedSensor::new(ground_truth(&cfg)?)),
        SensorMode::Remote(ep) => Box::new(RemoteSensor::new(ep.clone(), cfg.timeout())),
        SensorMode::FileDrop(dir) => Box::new(FileDropSensor::new(dir.clone(), cfg.poll(), cfg.timeout())),
    };

    let mut writer = ArtifactWriter::create(&args.out)?;
    let effective = args.out.join("config.effective");
    fs::write(&effective, cfg.to_effective()).map_err(|e| Error::Io {
        context: format!("writing {}", effective.display()),
        source: e,
    })?;
    let (state, records) = experiment::run_experiment(&cfg.experiment, &mut sensor, Some(&mut writer))?;
    let summary = args.out.join("summary.txt");
    fs::write(&summary, final_summary(&cfg, &state)).map_err(|e| Error::Io {
        context: format!("writing {}", summary.display()),
        source: e,
    })?;
    let s = state.summary;
    println!(
        "{} after {} measurements: x0 = {:.3} +/- {:.3}, y0 = {:.3} +/- {:.3}, r = {:.3} +/- {:.3}",
        if state.converged { "converged" } else { "not converged" },
        records.len(),
        s.x0.mean,
        s.x0.std,
        s.y0.mean,
        s.y0.std,
        s.r.mean,
        s.r.std
    );
    Ok(if state.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_serve(args: ServeArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.shared, None)?;
    apply_truth(&mut cfg, &args.true_circle)?;
    cfg.validate()?;
    let truth = ground_truth(&cfg)?;
    let options = ServerOptions {
        latency: Duration::from_millis(args.latency_ms),
        log_requests: true,
    };
    match &args.file_drop {
        Some(dir) => {
            eprintln!("serving readings through {}", dir.display());
            let stop = AtomicBool::new(false);
            sensor::serve_file_drop(truth, dir, cfg.poll(), options, &stop)?;
        }
        None => {
            let server = sensor::SensorServer::bind(&args.listen, truth, options)?;
            eprintln!("listening on {}", server.local_addr());
            server.wait();
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn replay_csv(rows: &[experiment::ReplayRow]) -> String {
    let mut out = String::from("iteration,mean_x0,std_x0,mean_y0,std_y0,mean_r,std_r,log_z\n");
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration, s.x0.mean, s.x0.std, s.y0.mean, s.y0.std, s.r.mean, s.r.std, r.log_z
        );
    }
    out
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode> {
    let sibling = args.log.parent().map(|d| d.join("config.effective"));
    let cfg = load_config(&args.shared, sibling.as_deref())?;
    cfg.experiment.validate()?;
    let records = experiment::read_log(&args.log)?;
    let rows = experiment::replay(&records, &cfg.experiment)?;
    let text = replay_csv(&rows);
    match &args.out {
        Some(path) => fs::write(path, &text).map_err(|e| Error::Io {
            context: format!("writing {}", path.display()),
            source: e,
        })?,
        None => print!("{text}"),
    }
    let mismatches: Vec<usize> = records
        .iter()
        .zip(&rows)
        .filter(|(rec, row)| rec.summary != row.summary || rec.log_z.to_bits() != row.log_z.to_bits())
        .map(|(rec, _)| rec.iteration)
        .collect();
    if mismatches.is_empty() {
        eprintln!("replay: {} logged iterations reproduced exactly", records.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("replay: summaries differ at iterations {mismatches:?}");
        Ok(ExitCode::from(1))
    }
}

fn cmd_baseline(args: BaselineArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.shared, None)?;
    apply_truth(&mut cfg, &args.true_circle)?;
    cfg.validate()?;
    let base_seed = cfg.experiment.seed;
    let mut report = String::new();
    let mut ratios = Vec::new();
    for t in 0..args.trials.max(1) {
        let mut trial = cfg.clone();
        trial.experiment.seed = base_seed.wrapping_add(t);
        let truth = ground_truth(&trial)?;

        let grid = inquiry::lattice(&trial.experiment.prior.bounds, args.raster_spacing, (0.0, 0.0), 0)?;
        let mut raster_sensor = SimulatedSensor::new(truth);
        let mut data = Dataset::new();
        for &(x, y) in &grid.points {
            let pos = (sensor::quantize_coordinate(x), sensor::quantize_coordinate(y));
            let reading = raster_sensor.measure(pos.0, pos.1)?;
            data.push(pos.0, pos.1, reading.value);
        }
        let (ensemble, run) = experiment::infer(&data, &trial.experiment)?;
        let raster = nested::summarize(&ensemble);

        let (state, _) = experiment::run_experiment(&trial.experiment, &mut SimulatedSensor::new(truth), None)?;
        let ratio = state.iteration as f64 / data.len() as f64;
        ratios.push(ratio);

        let _ = writeln!(report, "[trial {t}] seed = {}", trial.experiment.seed);
        let _ = writeln!(report, "raster_measurements = {}", data.len());
        summary_lines(&mut report, "raster_", &raster);
        let _ = writeln!(report, "raster_log_z = {}", run.log_z);
        let _ = writeln!(report, "adaptive_measurements = {}", state.iteration);
        let _ = writeln!(report, "adaptive_converged = {}", state.converged);
        summary_lines(&mut report, "adaptive_", &state.summary);
        let _ = writeln!(report, "ratio = {ratio}");
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let _ = writeln!(report, "[overall] trials = {} mean_ratio = {mean_ratio}", ratios.len());
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                context: format!("creating {}", dir.display()),
                source: e,
            })?;
            let path = dir.join("baseline.txt");
            fs::write(&path, &report).map_err(|e| Error::Io {
                context: format!("writing {}", path.display()),
                source: e,
            })?;
        }
        None => print!("{report}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Baseline(a) => cmd_baseline(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
