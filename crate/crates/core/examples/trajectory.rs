//! Runs seeded experiments against the default true circle and prints how
//! many measurements each needed.
//!
//! cargo run --release --example trajectory -- [trials] [first_seed]

use instrument::circle::Circle;
use instrument::experiment::{run_experiment, ExperimentConfig};
use instrument::sensor::{GroundTruth, SimulatedSensor};

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let first: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let truth = Circle::new(10.0, 15.0, 5.0);
    let mut counts = Vec::new();
    for seed in first..first + trials {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        let gt = GroundTruth::new(truth, cfg.response, &cfg.prior, seed).expect("valid truth");
        let started = std::time::Instant::now();
        let (state, _) = run_experiment(&cfg, &mut SimulatedSensor::new(gt), None).expect("run");
        let s = state.summary;
        println!(
            "seed {seed:>4}: {:>3} measurements converged={} x0={:.2}±{:.2} y0={:.2}±{:.2} r={:.2}±{:.2} ({:.1?})",
            state.iteration,
            state.converged,
            s.x0.mean,
            s.x0.std,
            s.y0.mean,
            s.y0.std,
            s.r.mean,
            s.r.std,
            started.elapsed()
        );
        counts.push(state.iteration);
    }
    counts.sort_unstable();
    println!("median {}", counts[counts.len() / 2]);
}
