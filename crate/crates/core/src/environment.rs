//! The i.i.d. random environment: a finite mixture of offspring laws.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{PosMatrix, SimplexPoint};
use crate::offspring::{moments, validate_class, ClassReport, MomentSummary, OffspringLaw};
use crate::rng::{replicate, Seeder, Stream};
use crate::stats::Estimate;

const WEIGHT_TOL: f64 = 1e-12;

/// A scalar parameter that moves an ensemble through criticality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TiltKnob {
    /// Multiplies every truncated-geometric mean parameter by `value`.
    GeometricScale { value: f64, lower: f64, upper: f64 },
    /// Splits the combined weight of atoms `first` and `second` as `value : 1 - value`.
    WeightPair { first: usize, second: usize, value: f64, lower: f64, upper: f64 },
}

impl TiltKnob {
    pub fn value(&self) -> f64 {
        match self {
            TiltKnob::GeometricScale { value, .. } | TiltKnob::WeightPair { value, .. } => *value,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TiltKnob::GeometricScale { lower, upper, .. } | TiltKnob::WeightPair { lower, upper, .. } => {
                (*lower, *upper)
            }
        }
    }

    fn with_value(&self, v: f64) -> TiltKnob {
        let mut k = self.clone();
        match &mut k {
            TiltKnob::GeometricScale { value, .. } | TiltKnob::WeightPair { value, .. } => *value = v,
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvAtom {
    pub weight: f64,
    pub law: OffspringLaw,
    pub moments: MomentSummary,
}

/// The law of one generation's offspring table.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentEnsemble {
    p: usize,
    atoms: Vec<EnvAtom>,
    cumulative: Vec<f64>,
    tilt: Option<TiltKnob>,
}

impl EnvironmentEnsemble {
    pub fn new(atoms: Vec<(f64, OffspringLaw)>) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::Construction("ensemble needs at least one atom".into()));
        };
        let p = first.1.dim();
        if atoms.iter().any(|(_, l)| l.dim() != p) {
            return Err(Error::Construction("all atoms must share the same p".into()));
        }
        if atoms.iter().any(|(w, _)| !w.is_finite() || *w < 0.0) {
            return Err(Error::Construction("atom weights must be non-negative".into()));
        }
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Construction(format!("atom weights sum to {total}, not 1")));
        }
        let atoms: Vec<EnvAtom> = atoms
            .into_iter()
            .map(|(w, law)| EnvAtom { weight: w / total, moments: moments(&law), law })
            .collect();
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.weight;
                acc
            })
            .collect();
        Ok(Self { p, atoms, cumulative, tilt: None })
    }

    pub fn with_tilt(mut self, tilt: TiltKnob) -> Result<Self> {
        if let TiltKnob::WeightPair { first, second, .. } = &tilt {
            if *first >= self.atoms.len() || *second >= self.atoms.len() || first == second {
                return Err(Error::Construction("weight-pair knob names invalid atoms".into()));
            }
        }
        self.tilt = Some(tilt);
        Ok(self)
    }

    pub fn tilt(&self) -> Option<&TiltKnob> {
        self.tilt.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn atoms(&self) -> &[EnvAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn law(&self, idx: usize) -> &OffspringLaw {
        &self.atoms[idx].law
    }

    pub fn mean_matrix(&self, idx: usize) -> &PosMatrix {
        &self.atoms[idx].moments.mean_matrix
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn sample_index(&self, rng: &mut Stream) -> usize {
        if self.atoms.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        self.cumulative.iter().position(|&c| u < c).unwrap_or_else(|| {
            // rounding left the last cumulative weight just below 1
            self.atoms.iter().rposition(|a| a.weight > 0.0).unwrap_or(0)
        })
    }

    /// The ensemble obtained by moving the tilt knob to `value`.
    pub fn retilted(&self, value: f64) -> Result<Self> {
        let knob = self.tilt.as_ref().ok_or_else(|| Error::Config("ensemble has no tilt knob".into()))?;
        let current = knob.value();
        let atoms: Vec<(f64, OffspringLaw)> = match knob {
            TiltKnob::GeometricScale { .. } => {
                if current <= 0.0 || value <= 0.0 {
                    return Err(Error::Domain("geometric scale must be positive".into()));
                }
                self.atoms
                    .iter()
                    .map(|a| Ok((a.weight, a.law.scale_means(value / current)?)))
                    .collect::<Result<_>>()?
            }
            TiltKnob::WeightPair { first, second, .. } => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Domain("weight split must lie in [0, 1]".into()));
                }
                let pool = self.atoms[*first].weight + self.atoms[*second].weight;
                self.atoms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let w = if i == *first {
                            value * pool
                        } else if i == *second {
                            (1.0 - value) * pool
                        } else {
                            a.weight
                        };
                        (w, a.law.clone())
                    })
                    .collect()
            }
        };
        EnvironmentEnsemble::new(atoms)?.with_tilt(knob.with_value(value))
    }
}

/// `n` i.i.d. atom indices.
pub fn sample_env_sequence(ens: &EnvironmentEnsemble, n: usize, rng: &mut Stream) -> Vec<usize> {
    (0..n).map(|_| ens.sample_index(rng)).collect()
}

/// `ln |x M_{0,n}|` along a freshly sampled environment, by the cocycle recursion.
fn log_norm_along(ens: &EnvironmentEnsemble, x: &SimplexPoint, n: usize, rng: &mut Stream) -> f64 {
    let mut v = x.coords().to_vec();
    let mut next = vec![0.0; ens.dim()];
    let mut total = 0.0;
    for _ in 0..n {
        let idx = ens.sample_index(rng);
        ens.mean_matrix(idx).row_times_into(&v, &mut next);
        let s: f64 = next.iter().sum();
        total += s.ln();
        for (a, b) in v.iter_mut().zip(&next) {
            *a = b / s;
        }
    }
    total
}

/// Estimates the upper Lyapunov exponent as the replica mean of
/// `ln |x M_{0,n}| / n`, started from the barycenter `x`.
pub fn estimate_lyapunov(ens: &EnvironmentEnsemble, n: usize, replicas: usize, seeder: &Seeder) -> Result<Estimate> {
    if n == 0 || replicas < 2 {
        return Err(Error::Domain("need n >= 1 and at least two replicas".into()));
    }
    let x = SimplexPoint::barycenter(ens.dim());
    let values = replicate(replicas, |r| {
        let mut rng = seeder.stream("lyapunov", r as u64);
        log_norm_along(ens, &x, n, &mut rng) / n as f64
    });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateMatrix("a mean-matrix product lost a column".into()));
    }
    Ok(Estimate::from_samples(&values))
}

/// Monte Carlo budget for Lyapunov estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovBudget {
    pub horizon: usize,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub knob: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub ensemble: EnvironmentEnsemble,
    pub knob: f64,
    pub estimate: Estimate,
    pub history: Vec<CalibrationStep>,
}

/// Bisects the tilt knob until `|pi_hat| <= target_tol`.
///
/// Every evaluation reuses the same random streams, so the estimate is a
/// smooth function of the knob and the bracketing is stable.
pub fn calibrate_critical(
    ens: &EnvironmentEnsemble,
    target_tol: f64,
    budget: LyapunovBudget,
    seeder: &Seeder,
) -> Result<Calibration> {
    let knob = ens
        .tilt()
        .ok_or_else(|| Error::CalibrationFailed("ensemble declares no tilt knob".into()))?
        .clone();
    let mut history = Vec::new();
    let mut eval = |value: f64| -> Result<(EnvironmentEnsemble, Estimate)> {
        let tilted = if value == knob.value() { ens.clone() } else { ens.retilted(value)? };
        let est = estimate_lyapunov(&tilted, budget.horizon, budget.replicas, seeder)?;
        history.push(CalibrationStep { knob: value, estimate: est.clone() });
        Ok((tilted, est))
    };

    let (start, est) = eval(knob.value())?;
    if est.value.abs() <= target_tol {
        return Ok(Calibration { ensemble: start, knob: knob.value(), estimate: est, history });
    }
    let (lower, upper) = knob.bounds();
    let (lo_ens, lo_est) = eval(lower)?;
    let (hi_ens, hi_est) = eval(upper)?;
    for (e, v, k) in [(&lo_ens, &lo_est, lower), (&hi_ens, &hi_est, upper)] {
        if v.value.abs() <= target_tol {
            return Ok(Calibration { ensemble: e.clone(), knob: k, estimate: v.clone(), history });
        }
    }
    if lo_est.value.signum() == hi_est.value.signum() {
        return Err(Error::CalibrationFailed(format!(
            "no sign change on [{lower}, {upper}]: estimates {} and {}",
            lo_est.value, hi_est.value
        )));
    }
    let (mut a, mut fa, mut b) = (lower, lo_est.value, upper);
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        let (mid_ens, mid_est) = eval(mid)?;
        if mid_est.value.abs() <= target_tol {
            return Ok(Calibration { ensemble: mid_ens, knob: mid, estimate: mid_est, history });
        }
        if mid_est.value.signum() == fa.signum() {
            a = mid;
            fa = mid_est.value;
        } else {
            b = mid;
        }
    }
    Err(Error::CalibrationFailed(format!("bisection did not reach tolerance {target_tol}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    SufficientConditionPass,
    Inconclusive,
}

impl Status {
    pub fn is_pass(self) -> bool {
        matches!(self, Status::Pass | Status::SufficientConditionPass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub status: Status,
    pub witness: BTreeMap<String, f64>,
}

impl HypothesisCheck {
    fn new(status: Status, witness: &[(&str, f64)]) -> Self {
        Self { status, witness: witness.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub delta: f64,
    pub h1: HypothesisCheck,
    pub h2: HypothesisCheck,
    pub h3: HypothesisCheck,
    pub h4: HypothesisCheck,
    pub h5: HypothesisCheck,
    pub h6: HypothesisCheck,
    pub class_g: HypothesisCheck,
    pub class_reports: Vec<ClassReport>,
}

impl HypothesisReport {
    /// True when every hypothesis passes, counting the sufficient-condition check for H2.
    pub fn all_pass(&self) -> bool {
        self.limit_theorem_checks().iter().all(|c| c.status.is_pass())
    }

    pub fn limit_theorem_checks(&self) -> [&HypothesisCheck; 6] {
        [&self.h1, &self.h2, &self.h3, &self.h4, &self.h5, &self.h6]
    }

    pub fn failing(&self) -> Vec<&'static str> {
        let named = [
            ("H1", &self.h1),
            ("H2", &self.h2),
            ("H3", &self.h3),
            ("H4", &self.h4),
            ("H5", &self.h5),
            ("H6", &self.h6),
            ("G", &self.class_g),
        ];
        named.into_iter().filter(|(_, c)| !c.status.is_pass()).map(|(n, _)| n).collect()
    }
}

fn proportional(a: &PosMatrix, b: &PosMatrix) -> bool {
    let ratio = b.l1_norm() / a.l1_norm();
    a.entries().iter().zip(b.entries()).all(|(x, y)| (x * ratio - y).abs() <= 1e-12 * y.abs().max(1e-300))
}

pub fn validate_hypotheses(
    ens: &EnvironmentEnsemble,
    delta: f64,
    epsilon: f64,
    k_bound: f64,
    budget: LyapunovBudget,
    seeder: &Seeder,
) -> Result<HypothesisReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 1)")));
    }
    let live: Vec<&EnvAtom> = ens.atoms().iter().filter(|a| a.weight > 0.0).collect();

    let mut h1_value = 0.0;
    for a in &live {
        match a.moments.mean_matrix.cond_bound() {
            Ok(c) => h1_value += a.weight * c.ln().abs().powf(2.0 + delta),
            Err(_) => h1_value = f64::INFINITY,
        }
    }
    let h1 = HypothesisCheck::new(
        if h1_value.is_finite() { Status::Pass } else { Status::Fail },
        &[("moment", h1_value)],
    );

    let positive = live.iter().all(|a| a.moments.mean_matrix.entries().iter().all(|&v| v > 0.0));
    let mut distinct = 0.0;
    'outer: for (i, a) in live.iter().enumerate() {
        for b in &live[i + 1..] {
            if !proportional(&a.moments.mean_matrix, &b.moments.mean_matrix) {
                distinct = 1.0;
                break 'outer;
            }
        }
    }
    let h2 = HypothesisCheck::new(
        if positive && distinct > 0.0 { Status::SufficientConditionPass } else { Status::Inconclusive },
        &[("all_positive", positive as u8 as f64), ("non_proportional_pair", distinct)],
    );

    let max_ratio = live.iter().map(|a| a.moments.mean_matrix.entry_ratio()).fold(0.0, f64::max);
    let h3 = HypothesisCheck::new(
        if live.iter().all(|a| a.moments.mean_matrix.in_class_b(1.0 / delta)) { Status::Pass } else { Status::Fail },
        &[("max_entry_ratio", max_ratio), ("bound", 1.0 / delta)],
    );

    let pi = estimate_lyapunov(ens, budget.horizon, budget.replicas, &seeder.child("h4"))?;
    let h4 = HypothesisCheck::new(
        if pi.value.abs() <= 3.0 * pi.stderr + 1e-12 { Status::Pass } else { Status::Fail },
        &[("pi_hat", pi.value), ("stderr", pi.stderr), ("replicas", pi.count as f64)],
    );

    let best_min_row = live
        .iter()
        .map(|a| a.moments.mean_matrix.row_sums().into_iter().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let h5 = HypothesisCheck::new(
        if best_min_row >= delta.exp() { Status::Pass } else { Status::Fail },
        &[("min_row_sum", best_min_row), ("log_min_row_sum", best_min_row.ln()), ("delta", delta)],
    );

    let h6_value: f64 = live
        .iter()
        .map(|a| {
            let norm = a.moments.mean_matrix.l1_norm();
            a.weight * a.moments.mu_g / (norm * norm) * (1.0 + norm.ln().max(0.0))
        })
        .sum();
    let h6 = HypothesisCheck::new(
        if h6_value.is_finite() { Status::Pass } else { Status::Fail },
        &[("moment", h6_value)],
    );

    let class_reports = ens
        .atoms()
        .iter()
        .map(|a| validate_class(&a.law, epsilon, k_bound))
        .collect::<Result<Vec<_>>>()?;
    let class_ok = class_reports.iter().zip(ens.atoms()).all(|(r, a)| a.weight == 0.0 || r.passes());
    let class_g = HypothesisCheck::new(
        if class_ok { Status::Pass } else { Status::Fail },
        &[("epsilon", epsilon), ("k_bound", k_bound)],
    );

    Ok(HypothesisReport { delta, h1, h2, h3, h4, h5, h6, class_g, class_reports })
}

/// Normalized occupation counts of the projective chain `X_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub p: usize,
    pub bins_per_axis: usize,
    /// Row-major over the first `p - 1` coordinates.
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn total_variation(&self, other: &Histogram) -> f64 {
        0.5 * self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub fn bin_of(&self, x: &[f64]) -> usize {
        let b = self.bins_per_axis;
        let cell = |v: f64| ((v * b as f64) as usize).min(b - 1);
        x[..self.p - 1].iter().fold(0, |acc, &v| acc * b + cell(v))
    }
}

pub fn occupation_histogram(
    ens: &EnvironmentEnsemble,
    x0: &SimplexPoint,
    burn_in: usize,
    n: usize,
    bins_per_axis: usize,
    rng: &mut Stream,
) -> Result<Histogram> {
    let p = ens.dim();
    if !(p == 2 || p == 3) {
        return Err(Error::Domain("occupation histograms support p = 2 or 3".into()));
    }
    if n < burn_in || bins_per_axis == 0 {
        return Err(Error::Domain("need n >= burn_in and at least one bin".into()));
    }
    let mut hist = Histogram { p, bins_per_axis, mass: vec![0.0; bins_per_axis.pow(p as u32 - 1)] };
    let mut v = x0.coords().to_vec();
    let mut next = vec![0.0; p];
    for k in 1..=n {
        ens.mean_matrix(ens.sample_index(rng)).row_times_into(&v, &mut next);
        let s: f64 = next.iter().sum();
        if s <= 0.0 {
            return Err(Error::DegenerateMatrix("xM vanishes".into()));
        }
        for (a, b) in v.iter_mut().zip(&next) {
            *a = b / s;
        }
        if k > burn_in {
            let bin = hist.bin_of(&v);
            hist.mass[bin] += 1.0;
        }
    }
    let total = (n - burn_in) as f64;
    if total > 0.0 {
        hist.mass.iter_mut().for_each(|m| *m /= total);
    }
    Ok(hist)
}
