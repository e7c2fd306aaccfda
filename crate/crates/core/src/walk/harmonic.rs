//! The harmonic function `V` of the killed walk and the Doob change of measure.
//!
//! Under the transformed law the walk stays positive; expectations are
//! computed as `E[phi w_k]` with weights `w_k = V(X_k, S_k) 1{m_k > 0} / V(x, a)`.

use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentEnsemble;
use crate::error::{Error, Result};
use crate::matrix::SimplexPoint;
use crate::rng::Seeder;
use crate::stats::{vector_estimates, Estimate};

use super::lattice::LatticeHarmonic;
use super::{estimate_v, sample_walk, WalkPath, Walker, ZERO_TOL};

/// A fixed, pre-computed approximation of `V(x, a)`.
pub trait Harmonic: Sync {
    fn value(&self, x: &[f64], a: f64) -> f64;

    fn stderr(&self, _x: &[f64], _a: f64) -> f64 {
        0.0
    }
}

impl Harmonic for LatticeHarmonic {
    fn value(&self, _x: &[f64], a: f64) -> f64 {
        self.at(a)
    }
}

/// Monte Carlo estimates of `V` on a grid of levels, for `x` binned by its
/// first coordinate; linear in `a` between grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloHarmonic {
    pub bins: usize,
    pub levels: Vec<f64>,
    /// `table[bin][level]`.
    pub table: Vec<Vec<Estimate>>,
    pub horizon: usize,
}

impl MonteCarloHarmonic {
    pub fn build(
        ens: &EnvironmentEnsemble,
        bins: usize,
        levels: Vec<f64>,
        horizon: usize,
        replicas: usize,
        seeder: &Seeder,
    ) -> Result<Self> {
        if bins == 0 || (bins > 1 && ens.dim() != 2) {
            return Err(Error::Domain("binning in x is supported for p = 2 only".into()));
        }
        if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("level grid must be strictly increasing with two or more points".into()));
        }
        let mut table = Vec::with_capacity(bins);
        for b in 0..bins {
            let x = if bins == 1 {
                SimplexPoint::barycenter(ens.dim())
            } else {
                let c = (b as f64 + 0.5) / bins as f64;
                SimplexPoint::new(vec![c, 1.0 - c])?
            };
            let row = levels
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let v = estimate_v(ens, &x, a, horizon, replicas, &seeder.child(&format!("v-table-{b}-{i}")))?;
                    Ok(Estimate { value: v.value, stderr: v.stderr, count: v.replicas })
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(row);
        }
        Ok(Self { bins, levels, table, horizon })
    }

    fn bin(&self, x: &[f64]) -> usize {
        ((x[0] * self.bins as f64) as usize).min(self.bins - 1)
    }

    fn lookup(&self, x: &[f64], a: f64, pick: impl Fn(&Estimate) -> f64, tail_slope: f64) -> f64 {
        let row = &self.table[self.bin(x)];
        let lv = &self.levels;
        if a <= lv[0] {
            return pick(&row[0]);
        }
        let last = lv.len() - 1;
        if a >= lv[last] {
            return pick(&row[last]) + tail_slope * (a - lv[last]);
        }
        let j = lv.partition_point(|&l| l <= a) - 1;
        let t = (a - lv[j]) / (lv[j + 1] - lv[j]);
        pick(&row[j]) * (1.0 - t) + pick(&row[j + 1]) * t
    }
}

impl Harmonic for MonteCarloHarmonic {
    fn value(&self, x: &[f64], a: f64) -> f64 {
        self.lookup(x, a, |e| e.value, 1.0)
    }

    fn stderr(&self, x: &[f64], a: f64) -> f64 {
        self.lookup(x, a, |e| e.stderr, 0.0)
    }
}

fn root_value(v: &dyn Harmonic, x: &[f64], a: f64) -> Result<f64> {
    let value = v.value(x, a);
    let stderr = v.stderr(x, a);
    if !(value > 0.0 && value > 3.0 * stderr) {
        return Err(Error::RootValueNonpositive { value, stderr });
    }
    Ok(value)
}

/// `w_k = V(X_k, S_k) 1{m_k > 0} / V(x, a)`.
pub fn doob_weights(path: &WalkPath, v: &dyn Harmonic, k: usize) -> Result<f64> {
    let root = root_value(v, path.x0.coords(), path.a)?;
    if k == 0 {
        return Ok(1.0);
    }
    if !path.alive(k) {
        return Ok(0.0);
    }
    Ok(v.value(path.x(k), path.s(k)) / root)
}

/// `E[phi(path) w_k]` for a functional of the first `k` steps.
#[allow(clippy::too_many_arguments)]
pub fn doob_expectation<F>(
    ens: &EnvironmentEnsemble,
    x: &SimplexPoint,
    a: f64,
    phi: F,
    k: usize,
    replicas: usize,
    v: &dyn Harmonic,
    seeder: &Seeder,
) -> Result<Estimate>
where
    F: Fn(&WalkPath) -> f64 + Sync,
{
    root_value(v, x.coords(), a)?;
    let est = vector_estimates(replicas, 1, |r, buf| {
        let mut rng = seeder.stream("doob", r as u64);
        if let Ok((_, path)) = sample_walk(ens, x, a, k, &mut rng) {
            if let Ok(w) = doob_weights(&path, v, k) {
                if w != 0.0 {
                    buf[0] = phi(&path) * w;
                }
            }
        }
    });
    Ok(est[0])
}

/// One term of the two series and their partial sums up to `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub n: usize,
    /// Transformed expectation of `e^{-S_n}`.
    pub exp_term: Estimate,
    /// Transformed expectation of `eta_n e^{-S_n}`.
    pub eta_term: Estimate,
    pub exp_partial: f64,
    pub eta_partial: f64,
}

/// Partial sums of both series for `n = 0..=n_max`.
///
/// `eta_n` is a function of the generation-`n` law, so its term is weighted
/// with `w_{n+1}`.
pub fn series_partial_sums(
    ens: &EnvironmentEnsemble,
    x: &SimplexPoint,
    a: f64,
    n_max: usize,
    replicas: usize,
    v: &dyn Harmonic,
    seeder: &Seeder,
) -> Result<Vec<SeriesTerm>> {
    let root = root_value(v, x.coords(), a)?;
    let etas: Vec<f64> = ens.atoms().iter().map(|at| at.moments.eta_g).collect();
    let terms = n_max + 1;
    let est = vector_estimates(replicas, 2 * terms, |r, buf| {
        let mut rng = seeder.stream("series", r as u64);
        let mut w = Walker::new(x, a);
        let mut weight = 1.0;
        for n in 0..terms {
            let s = w.s();
            buf[n] = weight * (-s).exp();
            let idx = ens.sample_index(&mut rng);
            if w.step(ens.mean_matrix(idx)).is_err() || w.s() <= ZERO_TOL {
                return;
            }
            weight = v.value(w.x(), w.s()) / root;
            buf[terms + n] = weight * etas[idx] * (-s).exp();
        }
    });
    let mut exp_partial = 0.0;
    let mut eta_partial = 0.0;
    Ok((0..terms)
        .map(|n| {
            exp_partial += est[n].value;
            eta_partial += est[terms + n].value;
            SeriesTerm { n, exp_term: est[n], eta_term: est[terms + n], exp_partial, eta_partial }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::critical_lattice_walk;
    use crate::walk::lattice::LatticeWalk;
    use crate::walk::run_walk;

    #[test]
    fn weights_at_the_boundaries() {
        let ens = critical_lattice_walk(2.0).unwrap();
        let walk = LatticeWalk::from_ensemble(&ens).unwrap();
        let v = walk.harmonic(1.0, 200, 40);
        let x = SimplexPoint::barycenter(2);
        let down = ens.mean_matrix(1);
        let up = ens.mean_matrix(0);
        let path = run_walk(&x, 1.0, &[down, down, up]).unwrap();
        assert_eq!(doob_weights(&path, &v, 0).unwrap(), 1.0);
        assert!(doob_weights(&path, &v, 1).unwrap() > 0.0);
        assert_eq!(doob_weights(&path, &v, 2).unwrap(), 0.0);
        assert_eq!(doob_weights(&path, &v, 3).unwrap(), 0.0);

        let below = run_walk(&x, -1.0, &[up]).unwrap();
        let v_neg = walk.harmonic(0.0, 10, 4);
        assert!(matches!(doob_weights(&below, &v_neg, 1), Err(Error::RootValueNonpositive { .. })));
    }

    #[test]
    fn normalization_and_positivity() {
        let ens = critical_lattice_walk(2.0).unwrap();
        let walk = LatticeWalk::from_ensemble(&ens).unwrap();
        let a = 1.0;
        let v = walk.harmonic(a, 400, 200);
        let x = SimplexPoint::barycenter(2);
        let seeder = Seeder::new(12);
        let one = doob_expectation(&ens, &x, a, |_| 1.0, 16, 100_000, &v, &seeder).unwrap();
        assert!(one.within_sigmas(1.0, 3.0), "{one:?}");
        let pos = doob_expectation(&ens, &x, a, |p| (p.s(16) > 0.0) as u8 as f64, 16, 100_000, &v, &seeder).unwrap();
        assert!((pos.value - one.value).abs() < 1e-12);
    }

    #[test]
    fn first_series_term_is_deterministic() {
        let ens = critical_lattice_walk(2.0).unwrap();
        let walk = LatticeWalk::from_ensemble(&ens).unwrap();
        let a = 0.7;
        let v = walk.harmonic(a, 100, 80);
        let terms = series_partial_sums(&ens, &SimplexPoint::barycenter(2), a, 5, 500, &v, &Seeder::new(1)).unwrap();
        assert!((terms[0].exp_term.value - (-a).exp()).abs() < 1e-15);
        assert_eq!(terms[0].exp_term.stderr, 0.0);
    }

    #[test]
    fn monte_carlo_table_tracks_the_lattice_values() {
        let ens = critical_lattice_walk(2.0).unwrap();
        let walk = LatticeWalk::from_ensemble(&ens).unwrap();
        let levels: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
        let table = MonteCarloHarmonic::build(&ens, 2, levels.clone(), 64, 4000, &Seeder::new(3)).unwrap();
        for &a in &levels {
            let exact = walk.harmonic(a, 64, 4).at(a);
            let x = [0.3, 0.7];
            let got = table.value(&x, a);
            assert!((got - exact).abs() <= 4.0 * table.stderr(&x, a), "a={a}: {got} vs {exact}");
        }
        // between grid points the table interpolates linearly
        let mid = table.value(&[0.3, 0.7], 1.0);
        assert!((mid - 0.5 * (table.value(&[0.3, 0.7], 0.5) + table.value(&[0.3, 0.7], 1.5))).abs() < 1e-12);
    }
}
