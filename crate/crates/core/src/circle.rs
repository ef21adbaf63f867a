//! Hypothesis space: circles on a rectangular field, uniform priors, and the
//! two-level Gaussian light-sensor likelihood.
//!
//! All lengths are centimeters. Supports are closed: a circle whose center
//! sits exactly on the field edge, or whose radius equals `r_min`/`r_max`, has
//! finite prior density. The disk boundary counts as white.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A hypothesized white circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub x0: f64,
    pub y0: f64,
    pub r: f64,
}

impl Circle {
    pub const fn new(x0: f64, y0: f64, r: f64) -> Self {
        Circle { x0, y0, r }
    }

    /// Parameters as `[x0, y0, r]`.
    pub fn to_array(self) -> [f64; 3] {
        [self.x0, self.y0, self.r]
    }

    pub fn from_array(p: [f64; 3]) -> Self {
        Circle::new(p[0], p[1], p[2])
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        contains_point(self, x, y)
    }
}

/// The rectangular playing field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for FieldBounds {
    /// The 20 cm x 30 cm field.
    fn default() -> Self {
        FieldBounds {
            x_min: 0.0,
            x_max: 20.0,
            y_min: 0.0,
            y_max: 30.0,
        }
    }
}

impl FieldBounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let b = FieldBounds {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Config(format!(
                "field bounds must satisfy x_min < x_max and y_min < y_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Expected readings on white and black plus the Gaussian noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorResponse {
    pub d_white: f64,
    pub d_black: f64,
    pub sigma: f64,
}

impl Default for SensorResponse {
    fn default() -> Self {
        SensorResponse {
            d_white: 0.8,
            d_black: 0.2,
            sigma: 0.06,
        }
    }
}

impl SensorResponse {
    pub fn new(d_white: f64, d_black: f64, sigma: f64) -> Result<Self> {
        let s = SensorResponse {
            d_white,
            d_black,
            sigma,
        };
        s.validate()?;
        Ok(s)
    }

    /// Model invariants: `d_white > d_black` and `sigma > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.d_white.is_finite() && self.d_black.is_finite() && self.d_white > self.d_black) {
            return Err(Error::Config(format!(
                "sensor response needs finite d_white > d_black, got {} and {}",
                self.d_white, self.d_black
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "sensor noise sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Mean reading at a point, given whether it is white.
    #[inline]
    pub fn mean(&self, white: bool) -> f64 {
        if white {
            self.d_white
        } else {
            self.d_black
        }
    }

    /// Decision threshold halfway between the two levels.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.d_white + self.d_black)
    }
}

/// Uniform prior over center position and radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    pub bounds: FieldBounds,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for Prior {
    /// Default field with radii from 1 cm to 15 cm.
    fn default() -> Self {
        Prior {
            bounds: FieldBounds::default(),
            r_min: 1.0,
            r_max: 15.0,
        }
    }
}

impl Prior {
    pub fn new(bounds: FieldBounds, r_min: f64, r_max: f64) -> Result<Self> {
        let p = Prior { bounds, r_min, r_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !(self.r_min.is_finite() && self.r_max.is_finite() && 0.0 < self.r_min && self.r_min < self.r_max) {
            return Err(Error::Config(format!(
                "radius range must satisfy 0 < r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    /// Lower corner of the parameter box, `[x_min, y_min, r_min]`.
    pub fn lower(&self) -> [f64; 3] {
        [self.bounds.x_min, self.bounds.y_min, self.r_min]
    }

    /// Upper corner of the parameter box, `[x_max, y_max, r_max]`.
    pub fn upper(&self) -> [f64; 3] {
        [self.bounds.x_max, self.bounds.y_max, self.r_max]
    }

    pub fn in_support(&self, c: &Circle) -> bool {
        self.bounds.contains(c.x0, c.y0) && c.r >= self.r_min && c.r <= self.r_max
    }

    pub fn log_density(&self, c: &Circle) -> f64 {
        log_prior(c, &self.bounds, self.r_min, self.r_max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Circle {
        sample_prior(&self.bounds, self.r_min, self.r_max, rng)
    }
}

/// One light reading at a known position. `index` starts at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub x: f64,
    pub y: f64,
    pub d: f64,
    pub index: usize,
}

/// Ordered, append-only collection of readings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    measurements: Vec<Measurement>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dataset from `(x, y, d)` triples, numbering them from 1.
    pub fn from_readings<I: IntoIterator<Item = (f64, f64, f64)>>(readings: I) -> Self {
        let mut data = Dataset::new();
        for (x, y, d) in readings {
            data.push(x, y, d);
        }
        data
    }

    /// Appends a reading and returns its index.
    pub fn push(&mut self, x: f64, y: f64, d: f64) -> usize {
        let index = self.measurements.len() + 1;
        self.measurements.push(Measurement { x, y, d, index });
        index
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Measurement> {
        self.measurements.iter()
    }

    /// The first `n` readings.
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            measurements: self.measurements[..n.min(self.len())].to_vec(),
        }
    }
}

/// True iff `(x, y)` lies in the closed disk.
#[inline]
pub fn contains_point(c: &Circle, x: f64, y: f64) -> bool {
    let dx = x - c.x0;
    let dy = y - c.y0;
    dx * dx + dy * dy <= c.r * c.r
}

/// Log of the product of the three uniform densities, or `-inf` off support.
pub fn log_prior(c: &Circle, b: &FieldBounds, r_min: f64, r_max: f64) -> f64 {
    let inside = b.contains(c.x0, c.y0) && c.r >= r_min && c.r <= r_max;
    if inside {
        -(b.width().ln() + b.height().ln() + (r_max - r_min).ln())
    } else {
        f64::NEG_INFINITY
    }
}

pub fn sample_prior<R: Rng + ?Sized>(b: &FieldBounds, r_min: f64, r_max: f64, rng: &mut R) -> Circle {
    let x0 = Uniform::new_inclusive(b.x_min, b.x_max).sample(rng);
    let y0 = Uniform::new_inclusive(b.y_min, b.y_max).sample(rng);
    let r = Uniform::new_inclusive(r_min, r_max).sample(rng);
    Circle { x0, y0, r }
}

/// Log Gaussian density of `d` about `mean`.
#[inline]
fn log_normal(d: f64, mean: f64, sigma: f64) -> f64 {
    let z = (d - mean) / sigma;
    -0.5 * z * z - sigma.ln() - HALF_LN_2PI
}

pub fn log_likelihood_point(c: &Circle, s: &SensorResponse, m: &Measurement) -> f64 {
    log_normal(m.d, s.mean(contains_point(c, m.x, m.y)), s.sigma)
}

/// Sum of per-reading log-likelihoods; readings are independent given the circle.
pub fn log_likelihood(c: &Circle, s: &SensorResponse, data: &Dataset) -> f64 {
    data.iter().map(|m| log_likelihood_point(c, s, m)).sum()
}

/// Per-reading log-likelihoods for both branches, precomputed.
///
/// Evaluation only has to classify each position as white or black, and the
/// result is bit-identical to [`log_likelihood`].
#[derive(Debug, Clone)]
pub struct LikelihoodTable {
    points: Vec<TableEntry>,
}

#[derive(Debug, Clone, Copy)]
struct TableEntry {
    x: f64,
    y: f64,
    white: f64,
    black: f64,
}

impl LikelihoodTable {
    pub fn new(s: &SensorResponse, data: &Dataset) -> Self {
        let points = data
            .iter()
            .map(|m| TableEntry {
                x: m.x,
                y: m.y,
                white: log_normal(m.d, s.d_white, s.sigma),
                black: log_normal(m.d, s.d_black, s.sigma),
            })
            .collect();
        LikelihoodTable { points }
    }

    pub fn log_likelihood(&self, c: &Circle) -> f64 {
        self.points
            .iter()
            .map(|p| if contains_point(c, p.x, p.y) { p.white } else { p.black })
            .sum()
    }
}
