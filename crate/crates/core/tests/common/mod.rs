//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls into the sampler or the entropy map.
#![allow(dead_code)]

use instrument::circle::{log_likelihood, Circle, Dataset, Prior, SensorResponse};

/// Log evidence by midpoint quadrature of prior x likelihood on an
/// `nx * ny * nr` grid over the prior box. The prior is uniform, so the
/// evidence is the grid average of the likelihood.
pub fn grid_log_evidence(data: &Dataset, s: &SensorResponse, prior: &Prior, n: [usize; 3]) -> f64 {
    let lo = prior.lower();
    let hi = prior.upper();
    let h: Vec<f64> = (0..3).map(|d| (hi[d] - lo[d]) / n[d] as f64).collect();
    let mut logs = Vec::with_capacity(n[0] * n[1] * n[2]);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let c = Circle::new(
                    lo[0] + (i as f64 + 0.5) * h[0],
                    lo[1] + (j as f64 + 0.5) * h[1],
                    lo[2] + (k as f64 + 0.5) * h[2],
                );
                logs.push(log_likelihood(&c, s, data));
            }
        }
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + (logs.iter().map(|l| (l - m).exp()).sum::<f64>() / logs.len() as f64).ln()
}

fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson integral of `f` on `[a, b]` with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Entropy of an equal two-Gaussian mixture binned into `n_bins` equal bins
/// on `[lo, hi]`, with bin masses from Simpson integration of the density
/// and renormalized to the range.
pub fn binned_mixture_entropy(m1: f64, m2: f64, sigma: f64, lo: f64, hi: f64, n_bins: usize) -> f64 {
    let pdf = |x: f64| 0.5 * normal_pdf(x, m1, sigma) + 0.5 * normal_pdf(x, m2, sigma);
    let w = (hi - lo) / n_bins as f64;
    let masses: Vec<f64> = (0..n_bins)
        .map(|b| simpson(pdf, lo + b as f64 * w, lo + (b + 1) as f64 * w, 400))
        .collect();
    let total: f64 = masses.iter().sum();
    masses
        .iter()
        .map(|m| m / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// One-sample Kolmogorov-Smirnov statistic of `xs` against the
/// uniform distribution on `[a, b]`.
pub fn ks_uniform(xs: &[f64], a: f64, b: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().map(|x| (x - a) / (b - a)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &u)| ((i as f64 + 1.0) / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Critical KS value at significance 0.01 (asymptotic).
pub fn ks_critical_001(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn median(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}
