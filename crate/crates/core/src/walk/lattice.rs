//! Exact dynamic programming for lattice walks.
//!
//! When every atom's mean matrix has constant row sums `r`, the increment
//! `ln |x M|` equals `ln r` for every `x`, so the walk has i.i.d. increments
//! that do not depend on the projective state. If the `ln r` values also lie
//! on a common lattice `h Z`, the killed walk is a finite Markov chain and all
//! of its laws follow from forward and backward recursions.

use crate::environment::EnvironmentEnsemble;

use super::ZERO_TOL;

const ROW_SUM_TOL: f64 = 1e-12;
const LATTICE_TOL: f64 = 1e-9;

/// An i.i.d. walk with increments `d * h`, `d` drawn from `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWalk {
    pub h: f64,
    /// `(multiple, probability)` pairs with distinct multiples.
    pub steps: Vec<(i64, f64)>,
    /// Step multiple of each ensemble atom.
    pub atom_steps: Vec<i64>,
}

impl LatticeWalk {
    pub fn new(h: f64, steps: Vec<(i64, f64)>) -> Self {
        let atom_steps = steps.iter().map(|s| s.0).collect();
        Self { h, steps, atom_steps }
    }

    /// Detects the lattice structure of an ensemble, if it has one.
    pub fn from_ensemble(ens: &EnvironmentEnsemble) -> Option<Self> {
        let mut logs = Vec::with_capacity(ens.len());
        for idx in 0..ens.len() {
            let sums = ens.mean_matrix(idx).row_sums();
            let r = sums[0];
            if r <= 0.0 || sums.iter().any(|s| (s - r).abs() > ROW_SUM_TOL * r) {
                return None;
            }
            logs.push(r.ln());
        }
        let base = logs.iter().filter(|l| l.abs() > LATTICE_TOL).map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        let h = if base.is_finite() {
            (1..=12).map(|q| base / q as f64).find(|&h| {
                logs.iter().all(|l| (l - (l / h).round() * h).abs() <= LATTICE_TOL)
            })?
        } else {
            1.0
        };
        let atom_steps: Vec<i64> = logs.iter().map(|l| (l / h).round() as i64).collect();
        let mut steps: Vec<(i64, f64)> = Vec::new();
        for (idx, &d) in atom_steps.iter().enumerate() {
            let w = ens.atoms()[idx].weight;
            if w == 0.0 {
                continue;
            }
            match steps.iter_mut().find(|s| s.0 == d) {
                Some(s) => s.1 += w,
                None => steps.push((d, w)),
            }
        }
        steps.sort_by_key(|s| s.0);
        Some(Self { h, steps, atom_steps })
    }

    fn max_up(&self) -> i64 {
        self.steps.iter().map(|s| s.0).max().unwrap_or(0).max(0)
    }

    fn max_down(&self) -> i64 {
        (-self.steps.iter().map(|s| s.0).min().unwrap_or(0)).max(0)
    }

    pub fn variance(&self) -> f64 {
        let mean: f64 = self.steps.iter().map(|(d, w)| w * *d as f64).sum();
        self.steps.iter().map(|(d, w)| w * (*d as f64 - mean).powi(2)).sum::<f64>() * self.h * self.h
    }

    /// Forward recursion for the walk started at `a` and killed at `tau`.
    pub fn forward(&self, a: f64) -> ForwardDp<'_> {
        ForwardDp { walk: self, a, n: 0, lo: 0, mass: vec![1.0] }
    }

    /// `V_H(a) = E[S_H; tau > H]` on the grid of levels reachable from `a`,
    /// tabulated up to `span` steps of `h` above `a`.
    pub fn harmonic(&self, a: f64, horizon: usize, span: usize) -> LatticeHarmonic {
        let h = self.h;
        let mut offset = a - h * (a / h).floor();
        if offset > h - LATTICE_TOL {
            offset -= h;
        }
        let up = self.max_up() as usize;
        let root = ((a - offset) / h).round().max(0.0) as usize;
        let keep = root + span + 1;
        let len = keep + horizon * up;
        let level = |j: usize| offset + j as f64 * h;
        let mut u: Vec<f64> = (0..len).map(level).collect();
        let mut next = vec![0.0; len];
        let mut top = len;
        for _ in 0..horizon {
            top -= up;
            for (j, slot) in next.iter_mut().enumerate().take(top) {
                let mut acc = 0.0;
                for &(d, w) in &self.steps {
                    let k = j as i64 + d;
                    if k < 0 {
                        continue;
                    }
                    let k = k as usize;
                    if level(k) > ZERO_TOL {
                        acc += w * u[k];
                    }
                }
                *slot = acc;
            }
            std::mem::swap(&mut u, &mut next);
        }
        u.truncate(keep);
        LatticeHarmonic { h, offset, values: u, horizon }
    }
}

impl LatticeWalk {
    /// Transformed expectation `E[f(S_n) V(S_n); tau > n] / V(a)`.
    pub fn doob_expectation<F: Fn(f64) -> f64>(&self, a: f64, v: &LatticeHarmonic, n: usize, f: F) -> f64 {
        let mut dp = self.forward(a);
        dp.advance_to(n);
        let root = v.at(a);
        dp.expectation(|s| f(s) * v.at(s)) / root
    }

    /// Transformed expectations of `e^{-S_n}` and `eta_n e^{-S_n}` for
    /// `n = 0..=n_max`, where atom `i` has weight `atom_weights[i]` and
    /// carries `atom_etas[i]`.
    pub fn doob_series(
        &self,
        a: f64,
        v: &LatticeHarmonic,
        atom_weights: &[f64],
        atom_etas: &[f64],
        n_max: usize,
    ) -> Vec<(f64, f64)> {
        let root = v.at(a);
        let mut dp = self.forward(a);
        let mut out = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            dp.advance_to(n);
            let exp_term = dp.expectation(|s| v.at(s) * (-s).exp()) / root;
            let eta_term = dp.expectation(|s| {
                let next: f64 = self
                    .atom_steps
                    .iter()
                    .zip(atom_weights.iter().zip(atom_etas))
                    .map(|(&d, (&w, &eta))| {
                        let t = s + d as f64 * self.h;
                        if t > ZERO_TOL {
                            w * eta * v.at(t)
                        } else {
                            0.0
                        }
                    })
                    .sum();
                next * (-s).exp()
            }) / root;
            out.push((exp_term, eta_term));
        }
        out
    }
}

/// The sub-probability law of `S_n` on `{tau > n}`.
#[derive(Debug, Clone)]
pub struct ForwardDp<'a> {
    walk: &'a LatticeWalk,
    a: f64,
    n: usize,
    lo: i64,
    mass: Vec<f64>,
}

impl ForwardDp<'_> {
    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn step(&mut self) {
        let down = self.walk.max_down();
        let up = self.walk.max_up();
        let lo = self.lo - down;
        let mut next = vec![0.0; self.mass.len() + (down + up) as usize];
        for (idx, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(d, w) in &self.walk.steps {
                next[(idx as i64 + down + d) as usize] += m * w;
            }
        }
        for (idx, v) in next.iter_mut().enumerate() {
            if self.a + (lo + idx as i64) as f64 * self.walk.h <= ZERO_TOL {
                *v = 0.0;
            }
        }
        let first = next.iter().position(|&v| v > 0.0).unwrap_or(next.len());
        self.lo = lo + first as i64;
        self.mass = next.split_off(first);
        self.n += 1;
    }

    pub fn advance_to(&mut self, n: usize) {
        while self.n < n {
            self.step();
        }
    }

    /// `(level, mass)` pairs with positive mass.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(move |(i, &m)| (self.a + (self.lo + i as i64) as f64 * self.walk.h, m))
    }

    /// `P(tau > n)`.
    pub fn survival(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `E[f(S_n); tau > n]`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(s, m)| m * f(s)).sum()
    }

    /// `P(S_n <= t | tau > n)`.
    pub fn conditioned_cdf(&self, t: f64) -> f64 {
        self.expectation(|s| if s <= t { 1.0 } else { 0.0 }) / self.survival()
    }

    /// The smallest level whose conditioned CDF reaches `q`.
    pub fn conditioned_quantile(&self, q: f64) -> f64 {
        let total = self.survival();
        let mut acc = 0.0;
        let mut last = f64::NAN;
        for (s, m) in self.atoms() {
            acc += m;
            last = s;
            if acc >= q * total {
                return s;
            }
        }
        last
    }
}

/// A harmonic function tabulated on `offset + j h`, `j = 0..values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeHarmonic {
    pub h: f64,
    pub offset: f64,
    pub values: Vec<f64>,
    pub horizon: usize,
}

impl LatticeHarmonic {
    /// Linear in the level between grid points; beyond the table the
    /// asymptotic slope one is used.
    pub fn at(&self, level: f64) -> f64 {
        let pos = (level - self.offset) / self.h;
        if pos <= 0.0 {
            return if pos > -LATTICE_TOL { self.values[0] } else { 0.0 };
        }
        let last = self.values.len() - 1;
        if pos >= last as f64 {
            return self.values[last] + (level - (self.offset + last as f64 * self.h));
        }
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        if frac < 1e-6 {
            return self.values[j];
        }
        if frac > 1.0 - 1e-6 {
            return self.values[j + 1];
        }
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::critical_lattice_walk;

    fn pm_ln2() -> LatticeWalk {
        LatticeWalk::from_ensemble(&critical_lattice_walk(2.0).unwrap()).unwrap()
    }

    /// Enumerates all `2^n` sign paths of the symmetric walk.
    fn enumerate(a: f64, h: f64, n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for bits in 0u32..(1 << n) {
            let mut s = a;
            let mut alive = true;
            for k in 0..n {
                s += if bits >> k & 1 == 1 { h } else { -h };
                if s <= ZERO_TOL {
                    alive = false;
                    break;
                }
            }
            if alive {
                out.push((s, 0.5f64.powi(n as i32)));
            }
        }
        out
    }

    #[test]
    fn detects_the_shipped_lattice() {
        let w = pm_ln2();
        assert!((w.h - 2f64.ln()).abs() < 1e-12);
        assert_eq!(w.steps, vec![(-1, 0.5), (1, 0.5)]);
        assert!((w.variance() - 2f64.ln().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_enumeration() {
        let w = pm_ln2();
        for a in [0.0, 0.5, 2.0] {
            let mut dp = w.forward(a);
            for n in [1usize, 3, 8, 14] {
                dp.advance_to(n);
                let paths = enumerate(a, w.h, n);
                let surv: f64 = paths.iter().map(|p| p.1).sum();
                let mean: f64 = paths.iter().map(|p| p.0 * p.1).sum();
                assert!((dp.survival() - surv).abs() < 1e-12);
                assert!((dp.expectation(|s| s) - mean).abs() < 1e-12);
            }
        }
        let mut dp = w.forward(0.0);
        dp.advance_to(1);
        assert_eq!(dp.survival(), 0.5);
        dp.advance_to(3);
        assert_eq!(dp.survival(), 0.25);
    }

    #[test]
    fn harmonic_of_the_symmetric_walk() {
        let w = pm_ln2();
        let v = w.harmonic(0.0, 500, 40);
        assert!((v.at(0.0) - w.h / 2.0).abs() < 1e-12);
        for j in 1..40 {
            assert!((v.at(j as f64 * w.h) - j as f64 * w.h).abs() < 1e-9);
        }
        // optional stopping: V_H(a) = a - E[S_tau; tau <= H] and S_tau is the
        // first lattice level at or below zero
        let v20 = w.harmonic(20.0, 2000, 10).at(20.0);
        let overshoot = w.h * ((20.0 / w.h).ceil() - 20.0 / w.h);
        let mut dp = w.forward(20.0);
        dp.advance_to(2000);
        assert!((v20 - (20.0 + overshoot * (1.0 - dp.survival()))).abs() < 1e-9);
        assert!((v20 / 20.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn harmonic_matches_forward_expectation() {
        let w = pm_ln2();
        let a = 0.3;
        let v = w.harmonic(a, 64, 5);
        let mut dp = w.forward(a);
        dp.advance_to(64);
        assert!((v.at(a) - dp.expectation(|s| s)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_lattice_ensembles() {
        use crate::environment::EnvironmentEnsemble;
        use crate::offspring::OffspringLaw;
        let uneven = OffspringLaw::deterministic(&[vec![1, 1], vec![2, 2]]).unwrap();
        assert!(LatticeWalk::from_ensemble(&EnvironmentEnsemble::new(vec![(1.0, uneven)]).unwrap()).is_none());
        let a = OffspringLaw::deterministic(&[vec![1, 1], vec![2, 0]]).unwrap();
        let b = OffspringLaw::deterministic(&[vec![1, 2], vec![0, 3]]).unwrap();
        // ln 2 and ln 3 are incommensurable
        assert!(LatticeWalk::from_ensemble(&EnvironmentEnsemble::new(vec![(0.5, a), (0.5, b)]).unwrap()).is_none());
    }
}
