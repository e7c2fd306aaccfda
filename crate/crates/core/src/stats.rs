//! Estimators and distribution-comparison statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{replicate, BLOCK};

/// A Monte Carlo estimate with its standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    /// Mean and standard error of the mean, reduced pairwise in index order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return Self { value: f64::NAN, stderr: f64::NAN, count };
        }
        let mean = pairwise_sum(samples) / count as f64;
        let stderr = if count >= 2 {
            let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (count as f64 - 1.0) / count as f64).sqrt()
        } else {
            0.0
        };
        Self { value: mean, stderr, count }
    }

    /// Bernoulli proportion `hits / count` with the binomial standard error.
    pub fn proportion(hits: usize, count: usize) -> Self {
        let q = hits as f64 / count as f64;
        let stderr = if count >= 2 { (q * (1.0 - q) / (count as f64 - 1.0)).sqrt() } else { 0.0 };
        Self { value: q, stderr, count }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, count: 1 }
    }

    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.value - target;
        if d == 0.0 {
            0.0
        } else {
            d.abs() / self.stderr
        }
    }

    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Pairwise (cascade) summation; the grouping depends only on the slice length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

#[derive(Debug, Clone)]
struct RunningMoments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, q), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *q += d * (v - *m);
        }
    }

    fn merge(mut self, other: &RunningMoments) -> Self {
        let total = self.count + other.count;
        if other.count == 0.0 {
            return self;
        }
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
            self.mean[i] += d * other.count / total;
        }
        self.count = total;
        self
    }
}

fn merge_tree(parts: &[RunningMoments]) -> RunningMoments {
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let mid = parts.len() / 2;
    merge_tree(&parts[..mid]).merge(&merge_tree(&parts[mid..]))
}

/// Per-coordinate estimates of a vector-valued replica statistic.
///
/// `f(r, buf)` writes replica `r`'s values into a zeroed buffer. Replicas are
/// grouped into fixed-size blocks and the block summaries are merged in a
/// fixed tree, so the result does not depend on the worker count.
pub fn vector_estimates<F>(count: usize, dim: usize, f: F) -> Vec<Estimate>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if count == 0 {
        return vec![Estimate { value: f64::NAN, stderr: f64::NAN, count: 0 }; dim];
    }
    let blocks = count.div_ceil(BLOCK);
    let parts = replicate(blocks, |b| {
        let mut acc = RunningMoments::new(dim);
        let mut buf = vec![0.0; dim];
        for r in b * BLOCK..((b + 1) * BLOCK).min(count) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(r, &mut buf);
            acc.push(&buf);
        }
        acc
    });
    let total = merge_tree(&parts);
    (0..dim)
        .map(|i| {
            let stderr = if count >= 2 { (total.m2[i] / (count as f64 - 1.0) / count as f64).sqrt() } else { 0.0 };
            Estimate { value: total.mean[i], stderr, count }
        })
        .collect()
}

/// Rayleigh distribution function `1 - exp(-t^2 / (2 sigma^2))`.
pub fn rayleigh_cdf(t: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("rayleigh scale must be positive, got {sigma}")));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("rayleigh argument must be non-negative, got {t}")));
    }
    Ok(rayleigh_cdf_unchecked(t, sigma))
}

pub(crate) fn rayleigh_cdf_unchecked(t: f64, sigma: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        -(-t * t / (2.0 * sigma * sigma)).exp_m1()
    }
}

/// Derivative of the Rayleigh distribution function with respect to its scale.
pub fn rayleigh_cdf_dsigma(t: f64, sigma: f64) -> f64 {
    -(t * t / sigma.powi(3)) * (-t * t / (2.0 * sigma * sigma)).exp()
}

/// Result of a one-sample Kolmogorov-Smirnov comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    /// Sample point at which the supremum is attained.
    pub argmax: f64,
}

/// Supremum distance between the empirical distribution of `samples` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    ks_test(samples, cdf).map(|r| r.statistic)
}

/// Like [`ks_distance`], also reporting where the supremum sits.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut best = KsResult { statistic: 0.0, argmax: sorted[0] };
    let mut i = 0;
    while i < sorted.len() {
        // group ties so the empirical jump is taken in one piece
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        let below = i as f64 / n;
        let above = j as f64 / n;
        let gap = (f - below).abs().max((above - f).abs());
        if gap > best.statistic {
            best = KsResult { statistic: gap, argmax: x };
        }
        i = j;
    }
    Ok(best)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Empirical distribution function evaluated at `t`.
pub fn ecdf(samples: &[f64], t: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().filter(|&&v| v <= t).count() as f64 / samples.len() as f64
}

/// Fit of `v_n ~ c * n^(-exponent)` with the exponent held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub coefficient: f64,
    /// Largest `|v_n / (c n^-exponent) - 1|` over the fitted points.
    pub max_relative_residual: f64,
}

/// Least squares on `ln v = ln c - exponent ln n`.
pub fn fit_power(ns: &[f64], values: &[f64], exponent: f64) -> Result<PowerFit> {
    if ns.len() != values.len() {
        return Err(Error::Domain("ns and values differ in length".into()));
    }
    if ns.len() < 2 {
        return Err(Error::Domain("need at least two points".into()));
    }
    for (index, (&n, &v)) in ns.iter().zip(values).enumerate() {
        if !(n > 0.0) {
            return Err(Error::Domain(format!("abscissa {n} at index {index} is not positive")));
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveValue { index, value: v });
        }
    }
    let logs: Vec<f64> = ns.iter().zip(values).map(|(&n, &v)| v.ln() + exponent * n.ln()).collect();
    let log_c = pairwise_sum(&logs) / logs.len() as f64;
    let coefficient = log_c.exp();
    let max_relative_residual = ns
        .iter()
        .zip(values)
        .map(|(&n, &v)| (v / (coefficient * n.powf(-exponent)) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(PowerFit { coefficient, max_relative_residual })
}

/// Fit of `v_n ~ c / sqrt(n)`.
pub fn fit_inverse_sqrt(ns: &[f64], values: &[f64]) -> Result<PowerFit> {
    fit_power(ns, values, 0.5)
}

/// Largest over smallest of a list of positive numbers.
pub fn max_min_ratio(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}
