//! Measurement selection by maximum predictive entropy.
//!
//! For each candidate position the posterior ensemble is pushed through the
//! sensor model to obtain a sample of possible readings; the entropy of a
//! histogram of that sample scores the position. The best position is the
//! one whose reading the ensemble is least able to predict.
//!
//! All histograms of one map share a single equal-width binning spanning the
//! range of every draw in the map. Scores are then comparable across
//! positions, and shifting every reading by a constant leaves them unchanged.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::circle::{FieldBounds, SensorResponse};
use crate::error::{Error, Result};
use crate::nested::PosteriorEnsemble;
use crate::rng;

/// Stream used for the grid jitter; per-point draws use the point index.
const JITTER_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InquiryConfig {
    /// Candidate grid spacing in cm.
    pub spacing: f64,
    pub n_bins: usize,
    /// Predictive draws per ensemble member.
    pub k_per_model: usize,
}

impl Default for InquiryConfig {
    fn default() -> Self {
        InquiryConfig {
            spacing: 1.0,
            n_bins: 16,
            k_per_model: 5,
        }
    }
}

impl InquiryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Config(format!(
                "grid spacing must be positive, got {}",
                self.spacing
            )));
        }
        if self.n_bins == 0 || self.k_per_model == 0 {
            return Err(Error::Config("n_bins and k_per_model must be at least 1".into()));
        }
        Ok(())
    }
}

/// Regular lattice of candidate positions, shifted by one random offset.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub points: Vec<(f64, f64)>,
    /// Lattice `(column, row)` of each point; row 0 is the lowest y.
    pub cells: Vec<(usize, usize)>,
    pub columns: usize,
    pub rows: usize,
    pub spacing: f64,
    pub jitter: (f64, f64),
    pub seed: u64,
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lattice at `spacing` offset by `jitter`, clipped to the field.
pub fn lattice(b: &FieldBounds, spacing: f64, jitter: (f64, f64), seed: u64) -> Result<CandidateGrid> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")));
    }
    if spacing >= b.width().min(b.height()) {
        return Err(Error::EmptyGrid { spacing });
    }
    let axis = |lo: f64, hi: f64, offset: f64| -> Vec<(usize, f64)> {
        let n = ((hi - lo) / spacing).ceil() as i64;
        (-1..=n)
            .map(|i| lo + (i as f64 + 0.5) * spacing + offset)
            .filter(|v| *v >= lo && *v <= hi)
            .enumerate()
            .collect()
    };
    let xs = axis(b.x_min, b.x_max, jitter.0);
    let ys = axis(b.y_min, b.y_max, jitter.1);
    let mut points = Vec::with_capacity(xs.len() * ys.len());
    let mut cells = Vec::with_capacity(xs.len() * ys.len());
    for &(row, y) in &ys {
        for &(col, x) in &xs {
            points.push((x, y));
            cells.push((col, row));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid { spacing });
    }
    Ok(CandidateGrid {
        points,
        cells,
        columns: xs.len(),
        rows: ys.len(),
        spacing,
        jitter,
        seed,
    })
}

/// Lattice with a uniform offset in `[-spacing/2, spacing/2]^2` drawn from `seed`.
pub fn build_jittered_grid(b: &FieldBounds, spacing: f64, seed: u64) -> Result<CandidateGrid> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")));
    }
    let mut g = rng::substream(seed, JITTER_STREAM);
    let half = Uniform::new_inclusive(-0.5 * spacing, 0.5 * spacing);
    let jitter = (half.sample(&mut g), half.sample(&mut g));
    lattice(b, spacing, jitter, seed)
}

/// Possible readings at `pos`: `k_per_model` noisy draws from each member.
pub fn predictive_draws<R: Rng + ?Sized>(
    e: &PosteriorEnsemble,
    s: &SensorResponse,
    pos: (f64, f64),
    k_per_model: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(e.size() * k_per_model);
    for c in &e.circles {
        let mean = s.mean(c.contains(pos.0, pos.1));
        for _ in 0..k_per_model {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            out.push(mean + s.sigma * z);
        }
    }
    out
}

/// Entropy in nats of an equal-width histogram over `[min, max]` of `values`.
pub fn histogram_entropy(values: &[f64], n_bins: usize) -> f64 {
    let (lo, hi) = min_max(values);
    binned_entropy(values, n_bins, lo, hi)
}

/// Entropy in nats of an equal-width histogram with `n_bins` bins over
/// `[lo, hi]`. Values outside the range fall into the end bins; a degenerate
/// range puts everything into one bin.
pub fn binned_entropy(values: &[f64], n_bins: usize, lo: f64, hi: f64) -> f64 {
    if values.is_empty() || n_bins <= 1 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return 0.0;
    }
    let mut counts = vec![0u32; n_bins];
    let scale = n_bins as f64 / (hi - lo);
    let top = n_bins - 1;
    for &v in values {
        let b = ((v - lo) * scale).floor();
        let b = if b <= 0.0 { 0 } else { (b as usize).min(top) };
        counts[b] += 1;
    }
    let total = values.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Predictive entropy over a candidate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    pub grid: CandidateGrid,
    /// Entropy in nats, parallel to `grid.points`.
    pub entropies: Vec<f64>,
    pub best_index: usize,
    pub best: (f64, f64),
    pub best_entropy: f64,
    pub n_bins: usize,
}

impl EntropyMap {
    fn from_entropies(grid: CandidateGrid, entropies: Vec<f64>, n_bins: usize) -> Self {
        let mut best_index = 0;
        for (i, &h) in entropies.iter().enumerate() {
            if h > entropies[best_index] {
                best_index = i;
            }
        }
        EntropyMap {
            best: grid.points[best_index],
            best_entropy: entropies[best_index],
            best_index,
            grid,
            entropies,
            n_bins,
        }
    }

    /// `(position, entropy)` pairs in grid order.
    pub fn entries(&self) -> impl Iterator<Item = ((f64, f64), f64)> + '_ {
        self.grid.points.iter().copied().zip(self.entropies.iter().copied())
    }

    /// Binary greyscale PGM, one pixel per lattice cell with +y up. Entropy
    /// maps linearly from `[0, ln n_bins]` to `[0, 255]`; cells clipped from
    /// the field are black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (w, h) = (self.grid.columns, self.grid.rows);
        let mut pixels = vec![0u8; w * h];
        let max_h = (self.n_bins as f64).ln();
        for (&(col, row), &ent) in self.grid.cells.iter().zip(&self.entropies) {
            let level = if max_h > 0.0 {
                (ent / max_h * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            pixels[(h - 1 - row) * w + col] = level;
        }
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend_from_slice(&pixels);
        out
    }

    /// Text sidecar: selected point, then one `x,y,entropy` line per position.
    pub fn sidecar(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "selected {} {} {}", self.best.0, self.best.1, self.best_entropy);
        let _ = writeln!(out, "n_bins {}", self.n_bins);
        let _ = writeln!(out, "jitter {} {}", self.grid.jitter.0, self.grid.jitter.1);
        out.push_str("x,y,entropy\n");
        for ((x, y), h) in self.entries() {
            let _ = writeln!(out, "{x},{y},{h}");
        }
        out
    }
}

fn point_draws(
    e: &PosteriorEnsemble,
    s: &SensorResponse,
    pos: (f64, f64),
    k_per_model: usize,
    seed: u64,
    index: usize,
) -> Vec<f64> {
    predictive_draws(e, s, pos, k_per_model, &mut rng::substream(seed, index as u64))
}

fn shared_range(draws: &[Vec<f64>]) -> (f64, f64) {
    draws
        .iter()
        .map(|d| min_max(d))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        })
}

/// Single-threaded entropy map. Point `i` draws from substream `i` of `seed`.
pub fn entropy_map_sequential(
    e: &PosteriorEnsemble,
    s: &SensorResponse,
    grid: CandidateGrid,
    cfg: &InquiryConfig,
    seed: u64,
) -> EntropyMap {
    let draws: Vec<Vec<f64>> = grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| point_draws(e, s, p, cfg.k_per_model, seed, i))
        .collect();
    let (lo, hi) = shared_range(&draws);
    let entropies = draws.iter().map(|d| binned_entropy(d, cfg.n_bins, lo, hi)).collect();
    EntropyMap::from_entropies(grid, entropies, cfg.n_bins)
}

/// Rayon version of [`entropy_map_sequential`]; bit-identical output.
#[cfg(feature = "parallel")]
pub fn entropy_map_parallel(
    e: &PosteriorEnsemble,
    s: &SensorResponse,
    grid: CandidateGrid,
    cfg: &InquiryConfig,
    seed: u64,
) -> EntropyMap {
    let draws: Vec<Vec<f64>> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| point_draws(e, s, p, cfg.k_per_model, seed, i))
        .collect();
    let (lo, hi) = shared_range(&draws);
    let entropies = draws
        .par_iter()
        .map(|d| binned_entropy(d, cfg.n_bins, lo, hi))
        .collect();
    EntropyMap::from_entropies(grid, entropies, cfg.n_bins)
}

/// Entropy map using the parallel path when the `parallel` feature is on.
pub fn entropy_map(
    e: &PosteriorEnsemble,
    s: &SensorResponse,
    grid: CandidateGrid,
    cfg: &InquiryConfig,
    seed: u64,
) -> Result<EntropyMap> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid { spacing: grid.spacing });
    }
    #[cfg(feature = "parallel")]
    let map = entropy_map_parallel(e, s, grid, cfg, seed);
    #[cfg(not(feature = "parallel"))]
    let map = entropy_map_sequential(e, s, grid, cfg, seed);
    Ok(map)
}

/// Builds a fresh jittered grid from `seed` and returns its entropy argmax.
pub fn select_measurement(
    e: &PosteriorEnsemble,
    s: &SensorResponse,
    b: &FieldBounds,
    cfg: &InquiryConfig,
    seed: u64,
) -> Result<((f64, f64), EntropyMap)> {
    cfg.validate()?;
    let grid = build_jittered_grid(b, cfg.spacing, seed)?;
    let map = entropy_map(e, s, grid, cfg, seed)?;
    Ok((map.best, map))
}
