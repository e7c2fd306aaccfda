//! Offspring laws: one distribution over `N^p` per parent type.
//!
//! Every law has finite support, so generating functions are polynomials and
//! all moments are computed exactly.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PosMatrix;
use crate::rng::Stream;

pub const DEFAULT_CAP: u32 = 64;

const PROB_TOL: f64 = 1e-12;

/// Batches at or below this size are sampled one individual at a time.
const INDIVIDUAL_BATCH: u64 = 32;

/// A geometric law on `{0, 1, ...}` with the tail above `cap` lumped into `cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGeometric {
    /// Mean of the untruncated geometric.
    pub mean_param: f64,
    pub cap: u32,
    theta: f64,
    ln_theta: f64,
}

impl TruncatedGeometric {
    pub fn new(mean_param: f64, cap: u32) -> Result<Self> {
        if !mean_param.is_finite() || mean_param < 0.0 {
            return Err(Error::Construction(format!("geometric mean {mean_param} must be finite and non-negative")));
        }
        if cap == 0 {
            return Err(Error::Construction("geometric cap must be at least 1".into()));
        }
        let theta = mean_param / (1.0 + mean_param);
        Ok(Self { mean_param, cap, theta, ln_theta: theta.ln() })
    }

    /// Success ratio `P(G >= k + 1 | G >= k)` of the untruncated law.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn pmf(&self, k: u32) -> f64 {
        let t = self.theta;
        match k.cmp(&self.cap) {
            std::cmp::Ordering::Less => (1.0 - t) * t.powi(k as i32),
            std::cmp::Ordering::Equal => t.powi(self.cap as i32),
            std::cmp::Ordering::Greater => 0.0,
        }
    }

    /// `P(G >= k)`.
    pub fn tail(&self, k: u32) -> f64 {
        if k > self.cap {
            0.0
        } else {
            self.theta.powi(k as i32)
        }
    }

    pub fn mean(&self) -> f64 {
        let t = self.theta;
        if t == 0.0 {
            return 0.0;
        }
        t * (1.0 - t.powi(self.cap as i32)) / (1.0 - t)
    }

    /// `E[G (G - 1)]`.
    pub fn factorial_moment2(&self) -> f64 {
        (2..=self.cap).map(|k| k as f64 * (k as f64 - 1.0) * self.pmf(k)).sum()
    }

    pub fn pgf(&self, s: f64) -> f64 {
        let ts = self.theta * s;
        let top = ts.powi(self.cap as i32);
        (1.0 - self.theta) * (1.0 - top) / (1.0 - ts) + top
    }

    pub fn sample(&self, rng: &mut Stream) -> u64 {
        if self.theta == 0.0 {
            return 0;
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        let k = (u.ln() / self.ln_theta).floor();
        if k >= self.cap as f64 {
            self.cap as u64
        } else {
            k as u64
        }
    }

    /// Sum of `count` independent draws, as `sum_{k=1}^{cap} #{G >= k}`
    /// where each count thins the previous one with probability `theta`.
    pub fn sample_sum(&self, count: u64, rng: &mut Stream) -> u64 {
        if count <= INDIVIDUAL_BATCH {
            return (0..count).map(|_| self.sample(rng)).sum();
        }
        let mut alive = count;
        let mut total = 0;
        for _ in 0..self.cap {
            alive = binomial(alive, self.theta, rng);
            if alive == 0 {
                break;
            }
            total += alive;
        }
        total
    }
}

fn binomial(n: u64, p: f64, rng: &mut Stream) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

/// The offspring distribution of one parent type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OffspringRow {
    /// Finitely many `(counts, probability)` atoms.
    Table { atoms: Vec<(Vec<u32>, f64)> },
    /// All-zero with probability `zero_prob`, otherwise independent truncated
    /// geometric counts per child type.
    ZeroInflatedGeometric { zero_prob: f64, children: Vec<TruncatedGeometric> },
}

impl OffspringRow {
    pub fn table(p: usize, atoms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Construction("table row needs at least one atom".into()));
        }
        if atoms.iter().any(|(a, _)| a.len() != p) {
            return Err(Error::Construction(format!("table atoms must have length {p}")));
        }
        if atoms.iter().any(|(_, q)| !q.is_finite() || *q < 0.0) {
            return Err(Error::Construction("atom probabilities must be non-negative".into()));
        }
        let total: f64 = atoms.iter().map(|(_, q)| q).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Construction(format!("row probabilities sum to {total}, not 1")));
        }
        let atoms = atoms.into_iter().map(|(a, q)| (a, q / total)).collect();
        Ok(OffspringRow::Table { atoms })
    }

    pub fn zero_inflated(zero_prob: f64, means: &[f64], cap: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&zero_prob) {
            return Err(Error::Construction(format!("zero probability {zero_prob} outside [0, 1]")));
        }
        let children = means.iter().map(|&m| TruncatedGeometric::new(m, cap)).collect::<Result<Vec<_>>>()?;
        Ok(OffspringRow::ZeroInflatedGeometric { zero_prob, children })
    }

    pub fn dim(&self) -> usize {
        match self {
            OffspringRow::Table { atoms } => atoms[0].0.len(),
            OffspringRow::ZeroInflatedGeometric { children, .. } => children.len(),
        }
    }

    pub fn sample_into(&self, out: &mut [u64], rng: &mut Stream) {
        match self {
            OffspringRow::Table { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &atoms[atoms.len() - 1].0;
                for (a, q) in atoms {
                    acc += q;
                    if u < acc {
                        chosen = a;
                        break;
                    }
                }
                for (o, &c) in out.iter_mut().zip(chosen) {
                    *o = c as u64;
                }
            }
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                if rng.random::<f64>() < *zero_prob {
                    out.iter_mut().for_each(|o| *o = 0);
                } else {
                    for (o, g) in out.iter_mut().zip(children) {
                        *o = g.sample(rng);
                    }
                }
            }
        }
    }

    /// Adds the summed offspring of `count` independent parents to `out`.
    ///
    /// Table rows draw a multinomial count per atom through sequential
    /// binomials, which is exact for any `count`.
    pub fn sample_sum_into(&self, count: u64, out: &mut [u64], rng: &mut Stream) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        match self {
            OffspringRow::Table { atoms } => {
                let mut remaining = count;
                let mut mass = 1.0;
                for (idx, (a, q)) in atoms.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let k = if idx + 1 == atoms.len() {
                        remaining
                    } else {
                        let pk = if mass > 0.0 { (q / mass).min(1.0) } else { 1.0 };
                        binomial(remaining, pk, rng)
                    };
                    remaining -= k;
                    mass -= q;
                    if k == 0 {
                        continue;
                    }
                    for (o, &c) in out.iter_mut().zip(a) {
                        let add = (c as u64).checked_mul(k).ok_or(Error::OverflowGuard)?;
                        *o = o.checked_add(add).filter(|v| *v <= i64::MAX as u64).ok_or(Error::OverflowGuard)?;
                    }
                }
            }
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                let active = if count <= INDIVIDUAL_BATCH {
                    (0..count).filter(|_| rng.random::<f64>() >= *zero_prob).count() as u64
                } else {
                    binomial(count, 1.0 - zero_prob, rng)
                };
                for (o, g) in out.iter_mut().zip(children) {
                    let add = g.sample_sum(active, rng);
                    *o = o.checked_add(add).filter(|v| *v <= i64::MAX as u64).ok_or(Error::OverflowGuard)?;
                }
            }
        }
        Ok(())
    }

    /// The row generating function at `s`, assumed to lie in `[0, 1]^p`.
    pub fn gf(&self, s: &[f64]) -> f64 {
        match self {
            OffspringRow::Table { atoms } => atoms
                .iter()
                .map(|(a, q)| q * a.iter().zip(s).map(|(&k, &x)| x.powi(k as i32)).product::<f64>())
                .sum(),
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                zero_prob + (1.0 - zero_prob) * children.iter().zip(s).map(|(g, &x)| g.pgf(x)).product::<f64>()
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            OffspringRow::Table { atoms } => {
                let mut m = vec![0.0; self.dim()];
                for (a, q) in atoms {
                    for (mj, &c) in m.iter_mut().zip(a) {
                        *mj += q * c as f64;
                    }
                }
                m
            }
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                children.iter().map(|g| (1.0 - zero_prob) * g.mean()).collect()
            }
        }
    }

    /// `B(k, l) = E[xi_k (xi_l - delta_kl)]`, row-major.
    pub fn hessian(&self) -> Vec<f64> {
        let p = self.dim();
        let mut b = vec![0.0; p * p];
        match self {
            OffspringRow::Table { atoms } => {
                for (a, q) in atoms {
                    for k in 0..p {
                        for l in 0..p {
                            let ak = a[k] as f64;
                            let al = a[l] as f64 - if k == l { 1.0 } else { 0.0 };
                            b[k * p + l] += q * ak * al;
                        }
                    }
                }
            }
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                let w = 1.0 - zero_prob;
                for k in 0..p {
                    for l in 0..p {
                        b[k * p + l] = if k == l {
                            w * children[k].factorial_moment2()
                        } else {
                            w * children[k].mean() * children[l].mean()
                        };
                    }
                }
            }
        }
        b
    }

    /// `P(xi_j >= 2)` for each child type `j`.
    pub fn prob_at_least_two(&self) -> Vec<f64> {
        match self {
            OffspringRow::Table { atoms } => (0..self.dim())
                .map(|j| atoms.iter().filter(|(a, _)| a[j] >= 2).map(|(_, q)| q).sum())
                .collect(),
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                children.iter().map(|g| (1.0 - zero_prob) * g.tail(2)).collect()
            }
        }
    }

    /// `P(xi = 0)`.
    pub fn prob_zero(&self) -> f64 {
        match self {
            OffspringRow::Table { atoms } => {
                atoms.iter().filter(|(a, _)| a.iter().all(|&c| c == 0)).map(|(_, q)| q).sum()
            }
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                zero_prob + (1.0 - zero_prob) * children.iter().map(|g| g.pmf(0)).product::<f64>()
            }
        }
    }

    /// A copy with every geometric mean parameter multiplied by `factor`.
    pub fn scale_means(&self, factor: f64) -> Result<Self> {
        match self {
            OffspringRow::Table { .. } => Err(Error::Domain("table rows have no mean parameter to scale".into())),
            OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
                let means: Vec<f64> = children.iter().map(|g| g.mean_param * factor).collect();
                OffspringRow::zero_inflated(*zero_prob, &means, children[0].cap)
            }
        }
    }
}

/// An offspring law for each of the `p` parent types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    rows: Vec<OffspringRow>,
}

impl OffspringLaw {
    pub fn new(rows: Vec<OffspringRow>) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::Construction("law needs at least one row".into()));
        }
        if rows.iter().any(|r| r.dim() != p) {
            return Err(Error::Construction(format!("every row must describe {p} child types")));
        }
        Ok(Self { rows })
    }

    /// A law where parent type `i` always has the offspring vector `atoms[i]`.
    pub fn deterministic(atoms: &[Vec<u32>]) -> Result<Self> {
        let p = atoms.len();
        Self::new(atoms.iter().map(|a| OffspringRow::table(p, vec![(a.clone(), 1.0)])).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[OffspringRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &OffspringRow {
        &self.rows[i]
    }

    pub fn scale_means(&self, factor: f64) -> Result<Self> {
        Self::new(self.rows.iter().map(|r| r.scale_means(factor)).collect::<Result<_>>()?)
    }

    pub fn mean_matrix(&self) -> PosMatrix {
        let p = self.dim();
        PosMatrix::new(p, self.rows.iter().flat_map(|r| r.mean()).collect()).expect("means are non-negative")
    }
}

/// One offspring vector for a parent of type `i`.
pub fn sample_offspring(law: &OffspringLaw, i: usize, rng: &mut Stream) -> Vec<u64> {
    let mut out = vec![0; law.dim()];
    law.row(i).sample_into(&mut out, rng);
    out
}

fn check_unit_cube(s: &[f64]) -> Result<()> {
    if let Some(bad) = s.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("generating function argument {bad} outside [0, 1]")));
    }
    Ok(())
}

/// `g^(i)(s) = sum_alpha P(xi(i, .) = alpha) s^alpha`, with `0^0 = 1`.
pub fn gf_eval(law: &OffspringLaw, i: usize, s: &[f64]) -> Result<f64> {
    if s.len() != law.dim() {
        return Err(Error::Domain(format!("argument has length {}, law has p = {}", s.len(), law.dim())));
    }
    check_unit_cube(s)?;
    Ok(law.row(i).gf(s))
}

/// All `p` row generating functions at `s`.
pub fn gf_vector_eval(law: &OffspringLaw, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != law.dim() {
        return Err(Error::Domain(format!("argument has length {}, law has p = {}", s.len(), law.dim())));
    }
    check_unit_cube(s)?;
    Ok(law.rows().iter().map(|r| r.gf(s)).collect())
}

/// First and second moment summary of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean_matrix: PosMatrix,
    /// `B^(i)` for each parent type `i`.
    pub hessians: Vec<PosMatrix>,
    /// `sigma2[i][j] = Var(xi(i, j))`.
    pub sigma2: Vec<Vec<f64>>,
    /// Covariance of the offspring vector for each parent type.
    pub covariances: Vec<Vec<f64>>,
    pub mu_g: f64,
    pub eta_g: f64,
}

pub fn moments(law: &OffspringLaw) -> MomentSummary {
    let p = law.dim();
    let mean_matrix = law.mean_matrix();
    let mut hessians = Vec::with_capacity(p);
    let mut sigma2 = Vec::with_capacity(p);
    let mut covariances = Vec::with_capacity(p);
    for (i, row) in law.rows().iter().enumerate() {
        let b = row.hessian();
        let m = mean_matrix.row(i);
        sigma2.push((0..p).map(|j| b[j * p + j] + m[j] - m[j] * m[j]).collect());
        let mut cov = vec![0.0; p * p];
        for k in 0..p {
            for l in 0..p {
                cov[k * p + l] = b[k * p + l] + if k == l { m[k] } else { 0.0 } - m[k] * m[l];
            }
        }
        covariances.push(cov);
        hessians.push(PosMatrix::new(p, b).expect("factorial moments are non-negative"));
    }
    let mu_g: f64 = hessians.iter().map(|b| b.l1_norm()).sum();
    let norm = mean_matrix.l1_norm();
    let eta_g = if norm > 0.0 { mu_g / (norm * norm) } else { f64::INFINITY };
    MomentSummary { mean_matrix, hessians, sigma2, covariances, mu_g, eta_g }
}

/// Attained value of one class condition for one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub parent: usize,
    pub child: Option<usize>,
    pub value: f64,
    pub pass: bool,
}

/// Per-condition outcome of the `G(eps, K)` membership check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub epsilon: f64,
    pub k_bound: f64,
    /// `P(xi(i, j) >= 2) >= eps`.
    pub two_children: Vec<ConditionCheck>,
    /// `P(xi(i, .) = 0) >= eps`.
    pub no_children: Vec<ConditionCheck>,
    /// `E[|xi(i, .)|^2] <= K`.
    pub second_moment: Vec<ConditionCheck>,
}

impl ClassReport {
    pub fn passes(&self) -> bool {
        self.two_children.iter().chain(&self.no_children).chain(&self.second_moment).all(|c| c.pass)
    }
}

pub fn validate_class(law: &OffspringLaw, epsilon: f64, k_bound: f64) -> Result<ClassReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if !(k_bound > 0.0) {
        return Err(Error::Domain(format!("K = {k_bound} must be positive")));
    }
    let mut two_children = Vec::new();
    let mut no_children = Vec::new();
    let mut second_moment = Vec::new();
    for (i, row) in law.rows().iter().enumerate() {
        for (j, v) in row.prob_at_least_two().into_iter().enumerate() {
            two_children.push(ConditionCheck { parent: i, child: Some(j), value: v, pass: v >= epsilon });
        }
        let z = row.prob_zero();
        no_children.push(ConditionCheck { parent: i, child: None, value: z, pass: z >= epsilon });
        let e2: f64 = row.hessian().iter().sum::<f64>() + row.mean().iter().sum::<f64>();
        second_moment.push(ConditionCheck { parent: i, child: None, value: e2, pass: e2 <= k_bound });
    }
    Ok(ClassReport { epsilon, k_bound, two_children, no_children, second_moment })
}
