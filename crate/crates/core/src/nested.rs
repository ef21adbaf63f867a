//! Nested sampling over circle parameters.
//!
//! Live points are drawn from the uniform prior. Each iteration discards the
//! lowest-likelihood live point, credits it with the prior mass shrinkage
//! `log X_k = -k / n_live`, and replaces it with a new prior draw above the
//! discarded likelihood, found by a constrained Metropolis random walk started
//! from a surviving live point.
//!
//! The circle likelihood is piecewise constant: it only depends on which
//! measured positions fall inside the disk. Every point therefore also carries
//! a uniform tie-breaking label and the hard constraint is the lexicographic
//! order on `(log_l, label)`. Without it the walk could never leave the
//! highest likelihood plateau.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::circle::{Circle, Dataset, LikelihoodTable, Prior, SensorResponse};
use crate::error::{Error, Result};
use crate::rng;

/// Nested sampling settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n_live: usize,
    /// Stop once the remaining evidence estimate is below this fraction of the
    /// accumulated evidence.
    pub termination_frac: f64,
    /// Metropolis proposals per replacement walk.
    pub walk_steps: usize,
    /// Walks attempted before a replacement is declared stalled.
    pub retry_limit: usize,
    /// Hard cap on iterations.
    pub max_iterations: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_live: 100,
            termination_frac: 1e-3,
            walk_steps: 20,
            retry_limit: 10,
            max_iterations: 100_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_live < 10 {
            return Err(Error::Config(format!(
                "n_live must be at least 10, got {}",
                self.n_live
            )));
        }
        if !(self.termination_frac > 0.0 && self.termination_frac < 1.0) {
            return Err(Error::Config(format!(
                "termination_frac must lie in (0, 1), got {}",
                self.termination_frac
            )));
        }
        if self.walk_steps == 0 || self.retry_limit == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "walk_steps, retry_limit and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LivePoint {
    pub circle: Circle,
    pub log_l: f64,
    /// Tie-breaking label, uniform on [0, 1).
    pub label: f64,
}

impl LivePoint {
    fn rank(&self, other: &LivePoint) -> Ordering {
        self.log_l
            .total_cmp(&other.log_l)
            .then(self.label.total_cmp(&other.label))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSample {
    pub circle: Circle,
    pub log_l: f64,
    /// Unnormalized log posterior weight, `log_l + log dX`.
    pub log_weight: f64,
}

/// Completed nested sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedRun {
    /// Discarded points in order, followed by the final live points by
    /// ascending likelihood.
    pub samples: Vec<WeightedSample>,
    pub log_z: f64,
    pub log_z_err: f64,
    /// Information (KL divergence of posterior from prior) in nats.
    pub info_h: f64,
    pub n_live: usize,
    pub n_iterations: usize,
    pub seed: u64,
}

impl NestedRun {
    /// Posterior weights normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| (s.log_weight - self.log_z).exp()).collect()
    }
}

/// Runs nested sampling for the circle model on `data`.
pub fn run_nested(
    data: &Dataset,
    response: &SensorResponse,
    prior: &Prior,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<NestedRun> {
    let table = LikelihoodTable::new(response, data);
    run_nested_with(|c| table.log_likelihood(c), prior, cfg, seed)
}

/// Runs nested sampling with an arbitrary log-likelihood over circles.
pub fn run_nested_with<F>(log_likelihood: F, prior: &Prior, cfg: &SamplerConfig, seed: u64) -> Result<NestedRun>
where
    F: Fn(&Circle) -> f64,
{
    cfg.validate()?;
    prior.validate()?;
    let n = cfg.n_live;
    let nf = n as f64;
    let mut g = rng::seeded(seed);

    let mut live: Vec<LivePoint> = (0..n)
        .map(|_| {
            let circle = prior.sample(&mut g);
            LivePoint {
                circle,
                log_l: log_likelihood(&circle),
                label: g.gen::<f64>(),
            }
        })
        .collect();

    let mut walker = Walker {
        prior,
        steps: cfg.walk_steps,
        factor: 1.0,
    };
    let mut dead: Vec<(Circle, f64)> = Vec::new();
    let mut log_z_acc = f64::NEG_INFINITY;
    let ln_frac = cfg.termination_frac.ln();
    let mut k = 0usize;

    loop {
        k += 1;
        let worst = (0..n)
            .min_by(|&a, &b| live[a].rank(&live[b]))
            .expect("live set is non-empty");
        let floor = live[worst];
        dead.push((floor.circle, floor.log_l));

        // dX_k = X_{k-1} - X_k with X_k = exp(-k/n)
        let log_dx = -((k - 1) as f64) / nf + (-(-1.0 / nf).exp_m1()).ln();
        log_z_acc = log_add_exp(log_z_acc, floor.log_l + log_dx);

        let scales = walker.scales(&live);
        let mut replaced = None;
        for attempt in 0..cfg.retry_limit {
            let start = loop {
                let i = g.gen_range(0..n);
                if i != worst {
                    break i;
                }
            };
            let (point, accepted) = walker.walk(&log_likelihood, live[start], &floor, &scales, &mut g);
            if accepted > 0 {
                replaced = Some(point);
                break;
            }
            if attempt + 1 < cfg.retry_limit {
                walker.factor *= 0.5;
            }
        }
        match replaced {
            Some(p) => live[worst] = p,
            None => {
                return Err(Error::ExplorationStalled {
                    iteration: k,
                    floor: floor.log_l,
                    proposals: cfg.walk_steps * cfg.retry_limit,
                })
            }
        }

        let log_x = -(k as f64) / nf;
        let max_live = live.iter().map(|p| p.log_l).fold(f64::NEG_INFINITY, f64::max);
        if max_live + log_x - log_z_acc < ln_frac || k >= cfg.max_iterations {
            break;
        }
    }

    live.sort_by(|a, b| a.rank(b));
    Ok(finalize(dead, live, k, n, seed))
}

/// Assigns trapezoid weights to the discarded sequence plus the swept live
/// points and computes evidence and information.
fn finalize(dead: Vec<(Circle, f64)>, live: Vec<LivePoint>, k: usize, n: usize, seed: u64) -> NestedRun {
    let nf = n as f64;
    let log_x_end = -(k as f64) / nf;
    let points: Vec<(Circle, f64)> = dead
        .into_iter()
        .chain(live.iter().map(|p| (p.circle, p.log_l)))
        .collect();
    let m = points.len();

    // log X for positions 0..=m+1; live points continue with linearly
    // shrinking mass X_K (n - j) / n, reaching zero at the last one.
    let log_x = |i: usize| -> f64 {
        if i <= k {
            -(i as f64) / nf
        } else if i <= m {
            let j = (i - k) as f64;
            log_x_end + ((nf - j) / nf).ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    // ln(X_a - X_b) for a < b
    let log_diff = |a: usize, b: usize| -> f64 {
        let (la, lb) = (log_x(a), log_x(b));
        la + (-(lb - la).exp()).ln_1p()
    };

    let half = 0.5f64.ln();
    let samples: Vec<WeightedSample> = points
        .iter()
        .enumerate()
        .map(|(idx, &(circle, log_l))| {
            let i = idx + 1;
            let mut log_dx = half + log_diff(i - 1, i + 1);
            if i == 1 {
                // likelihood below the first point is unknown; extend it flat
                log_dx = log_add_exp(log_dx, half + log_diff(0, 1));
            }
            WeightedSample {
                circle,
                log_l,
                log_weight: log_l + log_dx,
            }
        })
        .collect();

    let log_z = samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, log_add_exp);
    let info_h = if log_z.is_finite() {
        samples
            .iter()
            .map(|s| {
                let p = (s.log_weight - log_z).exp();
                if p > 0.0 {
                    p * (s.log_l - log_z)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            .max(0.0)
    } else {
        0.0
    };

    NestedRun {
        samples,
        log_z,
        log_z_err: (info_h / nf).sqrt(),
        info_h,
        n_live: n,
        n_iterations: k,
        seed,
    }
}

struct Walker<'a> {
    prior: &'a Prior,
    steps: usize,
    /// Multiplier on the live-point spread, adapted toward 50% acceptance.
    factor: f64,
}

impl Walker<'_> {
    /// Per-coordinate proposal scales: live-point standard deviation of
    /// `x0, y0, r, label`, floored so a collapsed coordinate can still move.
    fn scales(&self, live: &[LivePoint]) -> [f64; 4] {
        let lo = self.prior.lower();
        let hi = self.prior.upper();
        let n = live.len() as f64;
        let mut out = [0.0; 4];
        for (d, slot) in out.iter_mut().enumerate() {
            let coord = |p: &LivePoint| match d {
                0 => p.circle.x0,
                1 => p.circle.y0,
                2 => p.circle.r,
                _ => p.label,
            };
            let mean = live.iter().map(coord).sum::<f64>() / n;
            let var = live.iter().map(|p| (coord(p) - mean).powi(2)).sum::<f64>() / n;
            let range = if d < 3 { hi[d] - lo[d] } else { 1.0 };
            *slot = var.sqrt().max(range * 1e-9);
        }
        out
    }

    fn walk<F, R>(
        &mut self,
        log_likelihood: &F,
        start: LivePoint,
        floor: &LivePoint,
        scales: &[f64; 4],
        g: &mut R,
    ) -> (LivePoint, usize)
    where
        F: Fn(&Circle) -> f64,
        R: Rng,
    {
        let lo = self.prior.lower();
        let hi = self.prior.upper();
        let mut current = start;
        let (mut accepted, mut rejected) = (0usize, 0usize);
        for _ in 0..self.steps {
            let mut step = [0.0; 4];
            for (d, s) in step.iter_mut().enumerate() {
                let range = if d < 3 { hi[d] - lo[d] } else { 1.0 };
                let z: f64 = g.sample(StandardNormal);
                *s = (self.factor * scales[d]).min(range) * z;
            }
            let circle = Circle::new(
                current.circle.x0 + step[0],
                current.circle.y0 + step[1],
                current.circle.r + step[2],
            );
            let label = current.label + step[3];
            if !self.prior.in_support(&circle) || !(0.0..1.0).contains(&label) {
                rejected += 1;
                continue;
            }
            let candidate = LivePoint {
                circle,
                log_l: log_likelihood(&circle),
                label,
            };
            if candidate.rank(floor) == Ordering::Greater {
                current = candidate;
                accepted += 1;
            } else {
                rejected += 1;
            }
        }
        if accepted > rejected {
            self.factor *= (1.0 / accepted as f64).exp();
        } else if accepted < rejected {
            self.factor /= (1.0 / rejected as f64).exp();
        }
        self.factor = self.factor.clamp(1e-6, 10.0);
        (current, accepted)
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Equally weighted posterior samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEnsemble {
    pub circles: Vec<Circle>,
    pub source_seed: u64,
}

impl PosteriorEnsemble {
    pub fn new(circles: Vec<Circle>, source_seed: u64) -> Result<Self> {
        if circles.len() < 2 {
            return Err(Error::Config(format!(
                "an ensemble needs at least 2 members, got {}",
                circles.len()
            )));
        }
        Ok(PosteriorEnsemble { circles, source_seed })
    }

    /// `size` independent prior draws.
    pub fn from_prior(prior: &Prior, size: usize, seed: u64) -> Result<Self> {
        let mut g = rng::seeded(seed);
        let circles = (0..size).map(|_| prior.sample(&mut g)).collect();
        PosteriorEnsemble::new(circles, seed)
    }

    pub fn size(&self) -> usize {
        self.circles.len()
    }

    /// Fraction of members whose disk contains `(x, y)`.
    pub fn white_fraction(&self, x: f64, y: f64) -> f64 {
        let white = self.circles.iter().filter(|c| c.contains(x, y)).count();
        white as f64 / self.size() as f64
    }

    /// CSV dump: header `x0,y0,r`, one circle per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x0,y0,r\n");
        for c in &self.circles {
            let _ = writeln!(out, "{},{},{}", c.x0, c.y0, c.r);
        }
        out
    }

    /// Parses the CSV dump written by [`PosteriorEnsemble::to_csv`].
    pub fn from_csv(text: &str, source_seed: u64) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("x0,y0,r") => {}
            other => return Err(format!("expected header `x0,y0,r`, found {other:?}")),
        }
        let mut circles = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if vals.len() != 3 {
                return Err(format!("line {}: expected 3 fields, found {}", i + 2, vals.len()));
            }
            circles.push(Circle::new(vals[0], vals[1], vals[2]));
        }
        PosteriorEnsemble::new(circles, source_seed).map_err(|e| e.to_string())
    }
}

/// Systematic resampling: returns `size` indices into `weights`.
///
/// Weights need not be normalized but must be finite, non-negative and not
/// all zero.
pub fn systematic_indices<R: Rng>(weights: &[f64], size: usize, g: &mut R) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::DegenerateWeights("non-finite or negative weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateWeights("weights sum to zero".into()));
    }
    let scale = size as f64 / total;
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w * scale;
            Some(*acc)
        })
        .collect();
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let u: f64 = g.gen();
    let mut out = Vec::with_capacity(size);
    let mut j = 0usize;
    for i in 0..size {
        let target = i as f64 + u;
        while j < last && cumulative[j] <= target {
            j += 1;
        }
        out.push(j);
    }
    Ok(out)
}

/// Resamples a run into `size` equally weighted circles, in random order.
pub fn resample_ensemble(run: &NestedRun, size: usize, seed: u64) -> Result<PosteriorEnsemble> {
    if size < 2 {
        return Err(Error::Config(format!("ensemble size must be at least 2, got {size}")));
    }
    if !run.log_z.is_finite() {
        return Err(Error::DegenerateWeights(format!("log evidence is {}", run.log_z)));
    }
    let weights = run.normalized_weights();
    let mut g = rng::seeded(seed);
    let mut circles: Vec<Circle> = systematic_indices(&weights, size, &mut g)?
        .into_iter()
        .map(|i| run.samples[i].circle)
        .collect();
    circles.shuffle(&mut g);
    PosteriorEnsemble::new(circles, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-parameter posterior mean and spread.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamSummary {
    pub x0: Moments,
    pub y0: Moments,
    pub r: Moments,
}

impl ParamSummary {
    pub fn as_array(&self) -> [Moments; 3] {
        [self.x0, self.y0, self.r]
    }
}

pub fn summarize(e: &PosteriorEnsemble) -> ParamSummary {
    let n = e.size() as f64;
    let moments = |f: fn(&Circle) -> f64| {
        let mean = e.circles.iter().map(f).sum::<f64>() / n;
        let var = e.circles.iter().map(|c| (f(c) - mean).powi(2)).sum::<f64>() / n;
        Moments { mean, std: var.sqrt() }
    };
    ParamSummary {
        x0: moments(|c| c.x0),
        y0: moments(|c| c.y0),
        r: moments(|c| c.r),
    }
}
