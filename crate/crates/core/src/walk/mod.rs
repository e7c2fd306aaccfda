//! The Markov walk `(X_n, S_n)` driven by the mean matrices of the environment.
//!
//! `X_n = x . M_{0,n}` lives in the simplex and `S_n = a + ln |x M_{0,n}|`.
//! The walk is advanced through the cocycle: each step adds `ln |X_k M_k|`
//! and renormalizes, so raw products are never formed.

pub mod harmonic;
pub mod lattice;

use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentEnsemble;
use crate::error::{Error, Result};
use crate::matrix::{PosMatrix, SimplexPoint};
use crate::rng::{replicate, Seeder, Stream};
use crate::stats::{vector_estimates, Estimate};

pub use harmonic::{doob_expectation, doob_weights, series_partial_sums, Harmonic, MonteCarloHarmonic, SeriesTerm};
pub use lattice::{LatticeHarmonic, LatticeWalk};

/// Levels at or below this value count as non-positive.
///
/// Lattice walks revisit `0` up to rounding, so an exact comparison would
/// classify the same event differently along different float paths.
pub const ZERO_TOL: f64 = 1e-9;

/// Incremental walk state.
#[derive(Debug, Clone)]
pub struct Walker {
    x: Vec<f64>,
    buf: Vec<f64>,
    s: f64,
}

impl Walker {
    pub fn new(x0: &SimplexPoint, a: f64) -> Self {
        Self { x: x0.coords().to_vec(), buf: vec![0.0; x0.dim()], s: a }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Applies `m` and returns the increment `rho(X_k, M_k)`.
    #[inline]
    pub fn step(&mut self, m: &PosMatrix) -> Result<f64> {
        m.row_times_into(&self.x, &mut self.buf);
        let total: f64 = self.buf.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateMatrix("xM vanishes along the walk".into()));
        }
        for (x, y) in self.x.iter_mut().zip(&self.buf) {
            *x = y / total;
        }
        let inc = total.ln();
        self.s += inc;
        Ok(inc)
    }
}

/// A finite trajectory of the walk with its first-passage data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub x0: SimplexPoint,
    pub a: f64,
    p: usize,
    xs: Vec<f64>,
    s: Vec<f64>,
}

impl WalkPath {
    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.s.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.xs[k * self.p..(k + 1) * self.p]
    }

    pub fn s(&self, k: usize) -> f64 {
        self.s[k]
    }

    pub fn levels(&self) -> &[f64] {
        &self.s
    }

    /// `m_k = min(S_1, ..., S_k)`; infinite for `k = 0`.
    pub fn running_min(&self, k: usize) -> f64 {
        self.s[1..=k].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `tau > k`, equivalently `m_k > 0`.
    pub fn alive(&self, k: usize) -> bool {
        self.running_min(k) > ZERO_TOL
    }

    /// First `k >= 1` with `S_k <= 0`; `None` when censored at the horizon.
    pub fn tau(&self) -> Option<usize> {
        (1..self.s.len()).find(|&k| self.s[k] <= ZERO_TOL)
    }

    /// First `k >= 1` with `S_k >= 0`; `None` when censored at the horizon.
    pub fn tau_plus(&self) -> Option<usize> {
        (1..self.s.len()).find(|&k| self.s[k] >= -ZERO_TOL)
    }

    /// Last time in `0..=n` at which `S` attains its minimum over `S_0..S_n`.
    ///
    /// Ties are resolved on the partial sums `S_k - a`, so the result does
    /// not depend on the starting level.
    pub fn last_min_time(&self, n: usize) -> usize {
        let mut best = 0;
        let mut low = 0.0;
        for k in 1..=n {
            let v = self.s[k] - self.a;
            if v <= low + ZERO_TOL {
                best = k;
                low = low.min(v);
            }
        }
        best
    }
}

/// Runs the walk from `(x0, a)` through the given matrices.
pub fn run_walk(x0: &SimplexPoint, a: f64, matrices: &[&PosMatrix]) -> Result<WalkPath> {
    if !a.is_finite() {
        return Err(Error::Domain("starting level must be finite".into()));
    }
    let p = x0.dim();
    let mut w = Walker::new(x0, a);
    let mut xs = Vec::with_capacity((matrices.len() + 1) * p);
    let mut s = Vec::with_capacity(matrices.len() + 1);
    xs.extend_from_slice(w.x());
    s.push(a);
    for m in matrices {
        w.step(m)?;
        xs.extend_from_slice(w.x());
        s.push(w.s());
    }
    Ok(WalkPath { x0: x0.clone(), a, p, xs, s })
}

/// Samples an environment and runs the walk for `n` steps, recording atom indices.
pub fn sample_walk(
    ens: &EnvironmentEnsemble,
    x0: &SimplexPoint,
    a: f64,
    n: usize,
    rng: &mut Stream,
) -> Result<(Vec<usize>, WalkPath)> {
    let idx: Vec<usize> = (0..n).map(|_| ens.sample_index(rng)).collect();
    let ms: Vec<&PosMatrix> = idx.iter().map(|&i| ens.mean_matrix(i)).collect();
    Ok((idx, run_walk(x0, a, &ms)?))
}

/// Runs one walk until it is killed or reaches `n`; returns `S_n` on survival.
fn surviving_level(ens: &EnvironmentEnsemble, x: &SimplexPoint, a: f64, n: usize, rng: &mut Stream) -> Option<f64> {
    let mut w = Walker::new(x, a);
    for _ in 0..n {
        w.step(ens.mean_matrix(ens.sample_index(rng))).ok()?;
        if w.s() <= ZERO_TOL {
            return None;
        }
    }
    Some(w.s())
}

/// A simplex point drawn from the projective chain after `burn_in` steps.
pub fn burned_in_point(ens: &EnvironmentEnsemble, burn_in: usize, rng: &mut Stream) -> Result<SimplexPoint> {
    let mut w = Walker::new(&SimplexPoint::barycenter(ens.dim()), 0.0);
    for _ in 0..burn_in {
        w.step(ens.mean_matrix(ens.sample_index(rng)))?;
    }
    SimplexPoint::new(w.x().to_vec())
}

/// Estimates `sigma^2` as the replica mean of `S_n(x, 0)^2 / n`, with `x`
/// drawn from the projective chain after `burn_in` steps.
pub fn estimate_sigma2(
    ens: &EnvironmentEnsemble,
    n: usize,
    replicas: usize,
    burn_in: usize,
    seeder: &Seeder,
) -> Result<Estimate> {
    if n == 0 || replicas < 2 {
        return Err(Error::Domain("need n >= 1 and at least two replicas".into()));
    }
    let values = replicate(replicas, |r| -> Result<f64> {
        let mut rng = seeder.stream("sigma2", r as u64);
        let x = burned_in_point(ens, burn_in, &mut rng)?;
        let mut w = Walker::new(&x, 0.0);
        for _ in 0..n {
            w.step(ens.mean_matrix(ens.sample_index(&mut rng)))?;
        }
        Ok(w.s() * w.s() / n as f64)
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    /// `P(tau > n)`.
    pub estimate: Estimate,
    /// `sqrt(n) P(tau > n)`.
    pub scaled: f64,
}

/// `P(tau > n)` at every horizon from one path per replica.
pub fn tau_tail_table(
    ens: &EnvironmentEnsemble,
    x: &SimplexPoint,
    a: f64,
    horizons: &[usize],
    replicas: usize,
    seeder: &Seeder,
) -> Result<Vec<TailRow>> {
    check_increasing(horizons)?;
    let max = *horizons.last().unwrap_or(&0);
    let est = vector_estimates(replicas, horizons.len(), |r, buf| {
        let mut rng = seeder.stream("tau-tail", r as u64);
        let mut w = Walker::new(x, a);
        let mut next = 0;
        for k in 0..=max {
            if k > 0 {
                if w.step(ens.mean_matrix(ens.sample_index(&mut rng))).is_err() || w.s() <= ZERO_TOL {
                    return;
                }
            }
            while next < horizons.len() && horizons[next] == k {
                buf[next] = 1.0;
                next += 1;
            }
        }
    });
    Ok(horizons
        .iter()
        .zip(est)
        .map(|(&n, e)| TailRow { n, estimate: e, scaled: (n as f64).sqrt() * e.value })
        .collect())
}

pub(crate) fn check_increasing(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("horizons must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

/// `E[S_n; tau > n]` with its values at `n/4`, `n/2` and `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VEstimate {
    pub x: SimplexPoint,
    pub a: f64,
    pub n: usize,
    pub replicas: usize,
    pub value: f64,
    pub stderr: f64,
    pub curve: Vec<(usize, Estimate)>,
    /// The curve values agree within 5% of each other.
    pub stabilized: bool,
}

pub fn estimate_v(
    ens: &EnvironmentEnsemble,
    x: &SimplexPoint,
    a: f64,
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<VEstimate> {
    if n < 4 {
        return Err(Error::Domain("horizon must be at least 4".into()));
    }
    let horizons = [n / 4, n / 2, n];
    let est = vector_estimates(replicas, 3, |r, buf| {
        let mut rng = seeder.stream("harmonic-v", r as u64);
        let mut w = Walker::new(x, a);
        let mut next = 0;
        for k in 1..=n {
            if w.step(ens.mean_matrix(ens.sample_index(&mut rng))).is_err() || w.s() <= ZERO_TOL {
                return;
            }
            while next < 3 && horizons[next] == k {
                buf[next] = w.s();
                next += 1;
            }
        }
    });
    let curve: Vec<(usize, Estimate)> = horizons.iter().copied().zip(est.iter().copied()).collect();
    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let stabilized = lo > 0.0 && hi / lo <= 1.05;
    Ok(VEstimate {
        x: x.clone(),
        a,
        n,
        replicas,
        value: est[2].value,
        stderr: est[2].stderr,
        curve,
        stabilized,
    })
}

/// Accepted values of `S_n / sqrt(n)` on `{tau > n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSample {
    pub values: Vec<f64>,
    pub attempted: usize,
}

impl ConditionedSample {
    pub fn accepted(&self) -> usize {
        self.values.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.values.len() as f64 / self.attempted as f64
    }
}

pub const MIN_ACCEPTED: usize = 100;

pub fn conditioned_walk_samples(
    ens: &EnvironmentEnsemble,
    x: &SimplexPoint,
    a: f64,
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<ConditionedSample> {
    if n == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let scale = (n as f64).sqrt();
    let kept = replicate(replicas, |r| {
        let mut rng = seeder.stream("conditioned-walk", r as u64);
        surviving_level(ens, x, a, n, &mut rng).map(|s| s / scale)
    });
    let values: Vec<f64> = kept.into_iter().flatten().collect();
    if values.len() < MIN_ACCEPTED {
        return Err(Error::InsufficientAcceptance { accepted: values.len(), attempted: replicas, required: MIN_ACCEPTED });
    }
    Ok(ConditionedSample { values, attempted: replicas })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub b: f64,
    /// `P(S_n in [b, b + 1), tau > n)`.
    pub estimate: Estimate,
}

pub fn local_limit_cells(
    ens: &EnvironmentEnsemble,
    x: &SimplexPoint,
    a: f64,
    b_list: &[f64],
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<Vec<CellRow>> {
    if b_list.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::Domain("cell origins must be non-negative".into()));
    }
    let est = vector_estimates(replicas, b_list.len(), |r, buf| {
        let mut rng = seeder.stream("local-limit", r as u64);
        if let Some(s) = surviving_level(ens, x, a, n, &mut rng) {
            for (slot, &b) in buf.iter_mut().zip(b_list) {
                if s >= b && s < b + 1.0 {
                    *slot = 1.0;
                }
            }
        }
    });
    Ok(b_list.iter().zip(est).map(|(&b, estimate)| CellRow { b, estimate }).collect())
}
