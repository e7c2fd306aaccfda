//! The branching process in random environment.
//!
//! Populations are simulated exactly (multinomial and negative-binomial
//! batch draws) while every count fits in 53 bits. Beyond that a Gaussian
//! step with the exact per-parent mean and covariance is used; its relative
//! fluctuation is below `1e-8` there, and the generation of the first switch
//! is recorded.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::environment::{sample_env_sequence, EnvironmentEnsemble};
use crate::error::{Error, Result};
use crate::matrix::{ProductChain, SimplexPoint};
use crate::offspring::OffspringLaw;
use crate::rng::{replicate, replicate_blocks, Seeder, Stream};
use crate::stats::{vector_estimates, Estimate};
use crate::walk::{run_walk, WalkPath, Walker, MIN_ACCEPTED};

/// Largest count that is still simulated exactly.
pub const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0;

const COUNT_CEILING: f64 = 1e300;

/// A vector of non-negative integer type counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopulationVector {
    pub counts: Vec<u64>,
}

impl PopulationVector {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn unit(p: usize, i: usize) -> Self {
        let mut counts = vec![0; p];
        counts[i] = 1;
        Self { counts }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// `z / |z|`, the direction used to start the companion walk.
    pub fn direction(&self) -> Result<SimplexPoint> {
        SimplexPoint::new(self.counts.iter().map(|&c| c as f64).collect())
    }
}

/// One generation: every parent reproduces independently under `law`.
pub fn step_population(z: &PopulationVector, law: &OffspringLaw, rng: &mut Stream) -> Result<PopulationVector> {
    let mut out = vec![0u64; law.dim()];
    for (l, &c) in z.counts.iter().enumerate() {
        law.row(l).sample_sum_into(c, &mut out, rng)?;
    }
    Ok(PopulationVector { counts: out })
}

#[derive(Debug, Clone)]
struct GaussianRow {
    mean: Vec<f64>,
    chol: Vec<f64>,
}

/// Lower Cholesky factor of a positive semi-definite matrix; directions
/// with no variance get a zero column.
fn cholesky(a: &[f64], p: usize) -> Vec<f64> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                l[i * p + i] = if s > 0.0 { s.sqrt() } else { 0.0 };
            } else if l[j * p + j] > 0.0 {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    l
}

/// Simulation state: counts are exact integers until the first switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopState {
    pub counts: Vec<f64>,
    pub generation: usize,
    pub switched_at: Option<usize>,
}

impl PopState {
    pub fn new(z: &PopulationVector) -> Self {
        Self { counts: z.counts.iter().map(|&c| c as f64).collect(), generation: 0, switched_at: None }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.counts.iter().all(|&c| c == 0.0)
    }

    pub fn is_exact(&self) -> bool {
        self.counts.iter().all(|&c| c <= EXACT_LIMIT)
    }
}

/// Steps populations through the atoms of one ensemble.
#[derive(Debug, Clone)]
pub struct BranchingSimulator<'a> {
    ens: &'a EnvironmentEnsemble,
    gauss: Vec<Vec<GaussianRow>>,
}

impl<'a> BranchingSimulator<'a> {
    pub fn new(ens: &'a EnvironmentEnsemble) -> Self {
        let p = ens.dim();
        let gauss = ens
            .atoms()
            .iter()
            .map(|a| {
                (0..p)
                    .map(|l| GaussianRow {
                        mean: a.moments.mean_matrix.row(l).to_vec(),
                        chol: cholesky(&a.moments.covariances[l], p),
                    })
                    .collect()
            })
            .collect();
        Self { ens, gauss }
    }

    pub fn ensemble(&self) -> &EnvironmentEnsemble {
        self.ens
    }

    pub fn step(&self, atom: usize, st: &mut PopState, rng: &mut Stream) -> Result<()> {
        let p = self.ens.dim();
        if st.is_exact() {
            let mut out = vec![0u64; p];
            let law = self.ens.law(atom);
            for (l, &c) in st.counts.iter().enumerate() {
                law.row(l).sample_sum_into(c as u64, &mut out, rng)?;
            }
            for (c, o) in st.counts.iter_mut().zip(out) {
                *c = o as f64;
            }
        } else {
            let mut out = vec![0.0; p];
            let mut normals = vec![0.0; p];
            for (l, &c) in st.counts.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let g = &self.gauss[atom][l];
                normals.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                let root = c.sqrt();
                for k in 0..p {
                    let noise: f64 = (0..=k).map(|m| g.chol[k * p + m] * normals[m]).sum();
                    out[k] += c * g.mean[k] + root * noise;
                }
            }
            for (c, o) in st.counts.iter_mut().zip(out) {
                *c = o.max(0.0).round();
            }
        }
        if st.counts.iter().any(|&c| c > COUNT_CEILING) {
            return Err(Error::OverflowGuard);
        }
        st.generation += 1;
        if st.switched_at.is_none() && !st.is_exact() {
            st.switched_at = Some(st.generation);
        }
        Ok(())
    }
}

/// A jointly sampled environment, companion walk and population history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub env_indices: Vec<usize>,
    pub walk: WalkPath,
    pub populations: Vec<Vec<f64>>,
    pub survived: bool,
    pub switched_at: Option<usize>,
}

/// Draws `n` generations; each draws its atom and then the offspring.
pub fn simulate_trajectory(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    x0: &SimplexPoint,
    n: usize,
    rng: &mut Stream,
) -> Result<Trajectory> {
    let sim = BranchingSimulator::new(ens);
    let mut st = PopState::new(z);
    let mut env_indices = Vec::with_capacity(n);
    let mut populations = vec![st.counts.clone()];
    for _ in 0..n {
        let idx = ens.sample_index(rng);
        env_indices.push(idx);
        sim.step(idx, &mut st, rng)?;
        populations.push(st.counts.clone());
    }
    let ms: Vec<_> = env_indices.iter().map(|&i| ens.mean_matrix(i)).collect();
    let walk = run_walk(x0, 0.0, &ms)?;
    Ok(Trajectory { env_indices, walk, survived: !st.is_extinct(), populations, switched_at: st.switched_at })
}

/// `f_k(s)` for every parent type, written into `out`.
fn compose_into(law: &OffspringLaw, s: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(law.rows()) {
        *o = row.gf(s);
    }
}

/// `P(Z_n(z, .) != 0)` given the environment, by composing generating
/// functions backwards from `0`.
pub fn exact_quenched_survival(ens: &EnvironmentEnsemble, env: &[usize], z: &PopulationVector, n: usize) -> Result<f64> {
    if env.len() < n {
        return Err(Error::Domain(format!("environment has {} generations, need {n}", env.len())));
    }
    let p = ens.dim();
    let mut t = vec![0.0; p];
    let mut next = vec![0.0; p];
    for k in (0..n).rev() {
        compose_into(ens.law(env[k]), &t, &mut next);
        std::mem::swap(&mut t, &mut next);
    }
    let none: f64 = t.iter().zip(&z.counts).map(|(ti, &zi)| ti.powi(zi as i32)).product();
    Ok(1.0 - none)
}

/// Monte Carlo survival on one fixed environment.
pub fn quenched_survival_mc(
    ens: &EnvironmentEnsemble,
    env: &[usize],
    z: &PopulationVector,
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<Estimate> {
    let hits = replicate(replicas, |r| -> Result<bool> {
        let mut rng = seeder.stream("quenched-survival", r as u64);
        let mut pop = z.clone();
        for &idx in &env[..n] {
            if pop.is_zero() {
                break;
            }
            pop = step_population(&pop, ens.law(idx), &mut rng)?;
        }
        Ok(!pop.is_zero())
    });
    let mut count = 0;
    for h in hits {
        count += h? as usize;
    }
    Ok(Estimate::proportion(count, replicas))
}

/// Annealed survival, averaging the exact quenched probability over
/// sampled environments.
pub fn annealed_survival(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    n: usize,
    env_replicas: usize,
    seeder: &Seeder,
) -> Result<Estimate> {
    if n == 0 {
        return Ok(Estimate::exact(if z.is_zero() { 0.0 } else { 1.0 }));
    }
    let values = replicate(env_replicas, |r| {
        let mut rng = seeder.stream("annealed-survival", r as u64);
        let env = sample_env_sequence(ens, n, &mut rng);
        exact_quenched_survival(ens, &env, z, n)
    });
    Ok(Estimate::from_samples(&values.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Annealed survival by direct simulation of environment and population.
pub fn annealed_survival_naive(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<Estimate> {
    let sim = BranchingSimulator::new(ens);
    let hits = replicate(replicas, |r| -> Result<bool> {
        let mut rng = seeder.stream("annealed-naive", r as u64);
        let mut st = PopState::new(z);
        for _ in 0..n {
            if st.is_extinct() {
                break;
            }
            let idx = ens.sample_index(&mut rng);
            sim.step(idx, &mut st, &mut rng)?;
        }
        Ok(!st.is_extinct())
    });
    let mut count = 0;
    for h in hits {
        count += h? as usize;
    }
    Ok(Estimate::proportion(count, replicas))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub n: usize,
    pub survival: Estimate,
    /// `sqrt(n)` times the survival estimate.
    pub scaled: Estimate,
}

/// Annealed survival at several horizons, sharing one environment per replica.
pub fn beta_z_table(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    horizons: &[usize],
    env_replicas: usize,
    seeder: &Seeder,
) -> Result<Vec<BetaRow>> {
    crate::walk::check_increasing(horizons)?;
    let max = *horizons.last().expect("non-empty");
    let est = vector_estimates(env_replicas, horizons.len(), |r, buf| {
        let mut rng = seeder.stream("beta-z", r as u64);
        let env = sample_env_sequence(ens, max, &mut rng);
        for (slot, &n) in buf.iter_mut().zip(horizons) {
            *slot = exact_quenched_survival(ens, &env, z, n).unwrap_or(f64::NAN);
        }
    });
    Ok(horizons
        .iter()
        .zip(est)
        .map(|(&n, e)| {
            let f = (n as f64).sqrt();
            BetaRow { n, survival: e, scaled: Estimate { value: f * e.value, stderr: f * e.stderr, count: e.count } }
        })
        .collect())
}

/// `P(|Z_n| > 0, T_n = n)` at each horizon, averaging the exact quenched
/// survival over environments whose walk ends at its minimum.
pub fn end_minimum_rarity(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    horizons: &[usize],
    env_replicas: usize,
    seeder: &Seeder,
) -> Result<Vec<(usize, Estimate)>> {
    crate::walk::check_increasing(horizons)?;
    let x0 = z.direction()?;
    let max = *horizons.last().expect("non-empty");
    let est = vector_estimates(env_replicas, horizons.len(), |r, buf| {
        let mut rng = seeder.stream("end-minimum", r as u64);
        let env = sample_env_sequence(ens, max, &mut rng);
        let ms: Vec<_> = env.iter().map(|&i| ens.mean_matrix(i)).collect();
        let Ok(path) = run_walk(&x0, 0.0, &ms) else { return };
        for (slot, &n) in buf.iter_mut().zip(horizons) {
            if path.last_min_time(n) == n {
                *slot = exact_quenched_survival(ens, &env, z, n).unwrap_or(f64::NAN);
            }
        }
    });
    Ok(horizons.iter().copied().zip(est).collect())
}

/// Smallest pathwise gain `P(survive | z + e_j) - P(survive | z)` over
/// sampled environments, horizons and types; survival is monotone when it
/// is non-negative.
pub fn survival_monotonicity(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    horizons: &[usize],
    env_replicas: usize,
    seeder: &Seeder,
) -> Result<f64> {
    crate::walk::check_increasing(horizons)?;
    let max = *horizons.last().expect("non-empty");
    let gains = replicate(env_replicas, |r| -> Result<f64> {
        let mut rng = seeder.stream("monotone-z", r as u64);
        let env = sample_env_sequence(ens, max, &mut rng);
        let mut worst = f64::INFINITY;
        for &n in horizons {
            let base = exact_quenched_survival(ens, &env, z, n)?;
            for j in 0..z.dim() {
                let mut bigger = z.clone();
                bigger.counts[j] += 1;
                worst = worst.min(exact_quenched_survival(ens, &env, &bigger, n)? - base);
            }
        }
        Ok(worst)
    });
    gains.into_iter().try_fold(f64::INFINITY, |acc, g| Ok(acc.min(g?)))
}

/// State of a surviving replica at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub replica: usize,
    pub n: usize,
    pub counts: Vec<f64>,
    /// `S_n(z / |z|, 0)`.
    pub walk_level: f64,
    /// `ln |M_{0,n} e_j|` for each `j`.
    pub log_col_sums: Vec<f64>,
    pub exact: bool,
}

impl Snapshot {
    pub fn log_total(&self) -> f64 {
        self.counts.iter().sum::<f64>().ln()
    }

    /// `Z_n(z, j) / |M_{0,n} e_j|`, formed in log space.
    pub fn scaled_population(&self, j: usize) -> f64 {
        if self.counts[j] == 0.0 {
            0.0
        } else {
            (self.counts[j].ln() - self.log_col_sums[j]).exp()
        }
    }
}

/// Survivors at each horizon out of `attempted` replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSamples {
    pub horizons: Vec<usize>,
    pub attempted: usize,
    pub survivors: Vec<Vec<Snapshot>>,
}

impl SurvivalSamples {
    pub fn at(&self, n: usize) -> Option<&[Snapshot]> {
        self.horizons.iter().position(|&h| h == n).map(|i| self.survivors[i].as_slice())
    }

    pub fn survival(&self, n: usize) -> Option<Estimate> {
        self.at(n).map(|s| Estimate::proportion(s.len(), self.attempted))
    }
}

/// Simulates environment, walk, mean-matrix product and population jointly
/// and keeps the surviving replicas at each horizon.
pub fn conditioned_snapshots(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    horizons: &[usize],
    replicas: usize,
    seeder: &Seeder,
    tag: &str,
) -> Result<SurvivalSamples> {
    crate::walk::check_increasing(horizons)?;
    if z.is_zero() {
        return Err(Error::Domain("initial population must be non-zero".into()));
    }
    let x0 = z.direction()?;
    let sim = BranchingSimulator::new(ens);
    let max = *horizons.last().expect("non-empty");
    let found = replicate_blocks(replicas, |r, out: &mut Vec<Result<(usize, Snapshot)>>| {
        let mut rng = seeder.stream(tag, r as u64);
        let mut st = PopState::new(z);
        let mut walker = Walker::new(&x0, 0.0);
        let mut chain = ProductChain::new(ens.dim());
        let mut next = 0;
        for k in 0..=max {
            if k > 0 {
                let idx = ens.sample_index(&mut rng);
                let m = ens.mean_matrix(idx);
                let stepped = walker.step(m).and_then(|_| chain.push(m)).and_then(|_| sim.step(idx, &mut st, &mut rng));
                if let Err(e) = stepped {
                    out.push(Err(e));
                    return;
                }
                if st.is_extinct() {
                    return;
                }
            }
            while next < horizons.len() && horizons[next] == k {
                out.push(Ok((
                    next,
                    Snapshot {
                        replica: r,
                        n: k,
                        counts: st.counts.clone(),
                        walk_level: walker.s(),
                        log_col_sums: (0..ens.dim()).map(|j| chain.log_col_sum(j)).collect(),
                        exact: st.switched_at.is_none(),
                    },
                )));
                next += 1;
            }
        }
    });
    let mut survivors = vec![Vec::new(); horizons.len()];
    for item in found {
        let (h, snap) = item?;
        survivors[h].push(snap);
    }
    Ok(SurvivalSamples { horizons: horizons.to_vec(), attempted: replicas, survivors })
}

fn require_accepted(accepted: usize, attempted: usize) -> Result<()> {
    if accepted < MIN_ACCEPTED {
        return Err(Error::InsufficientAcceptance { accepted, attempted, required: MIN_ACCEPTED });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPopulationSample {
    pub n: usize,
    pub j: usize,
    pub values: Vec<f64>,
    pub attempted: usize,
}

impl ScaledPopulationSample {
    pub fn from_snapshots(samples: &SurvivalSamples, n: usize, j: usize) -> Result<Self> {
        let snaps = samples.at(n).ok_or_else(|| Error::Config(format!("horizon {n} was not simulated")))?;
        require_accepted(snaps.len(), samples.attempted)?;
        Ok(Self { n, j, values: snaps.iter().map(|s| s.scaled_population(j)).collect(), attempted: samples.attempted })
    }

    /// Fraction of values in `[0, delta]`.
    pub fn mass_below(&self, delta: f64) -> Estimate {
        Estimate::proportion(self.values.iter().filter(|&&v| v <= delta).count(), self.values.len())
    }
}

/// `Z_n(z, j) / |M_{0,n} e_j|` on the survival event.
pub fn conditioned_scaled_population(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    j: usize,
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<ScaledPopulationSample> {
    let samples = conditioned_snapshots(ens, z, &[n], replicas, seeder, "scaled-population")?;
    ScaledPopulationSample::from_snapshots(&samples, n, j)
}

/// Paired `ln |Z_n| / sqrt(n)` and `S_n / sqrt(n)` on the survival event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPopulationSample {
    pub n: usize,
    pub log_population: Vec<f64>,
    pub walk: Vec<f64>,
    pub attempted: usize,
}

impl LogPopulationSample {
    pub fn from_snapshots(samples: &SurvivalSamples, n: usize) -> Result<Self> {
        let snaps = samples.at(n).ok_or_else(|| Error::Config(format!("horizon {n} was not simulated")))?;
        require_accepted(snaps.len(), samples.attempted)?;
        let root = (n as f64).sqrt();
        Ok(Self {
            n,
            log_population: snaps.iter().map(|s| s.log_total() / root).collect(),
            walk: snaps.iter().map(|s| s.walk_level / root).collect(),
            attempted: samples.attempted,
        })
    }

    /// Fraction of survivors with `|ln |Z_n| - S_n| >= eps sqrt(n)`.
    pub fn coupling_exceedance(&self, eps: f64) -> Estimate {
        let hits = self.log_population.iter().zip(&self.walk).filter(|(l, s)| (*l - *s).abs() >= eps).count();
        Estimate::proportion(hits, self.log_population.len())
    }
}

pub fn conditioned_log_population(
    ens: &EnvironmentEnsemble,
    z: &PopulationVector,
    n: usize,
    replicas: usize,
    seeder: &Seeder,
) -> Result<LogPopulationSample> {
    let samples = conditioned_snapshots(ens, z, &[n], replicas, seeder, "log-population")?;
    LogPopulationSample::from_snapshots(&samples, n)
}

/// Per-horizon normalized-population statistics on a fixed environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsHorizon {
    pub n: usize,
    /// `W_n(i, j)` for each `j`.
    pub w_mean: Vec<Estimate>,
    pub w_variance: Vec<f64>,
    /// `E[(W_{2n}(i, j) - W_n(i, j))^2]` for each `j`.
    pub cauchy_l2: Vec<Estimate>,
    pub extinct: Estimate,
    pub exact_extinction: f64,
    /// Replicas with `max_j W_n(i, j) < small_threshold`.
    pub small_w: usize,
    pub small_w_extinct: usize,
    pub coincidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub env_seed: u64,
    pub env_indices: Vec<usize>,
    pub ancestor: usize,
    pub small_threshold: f64,
    /// Partial sums over `n` of `sigma^2_{g_n}(i, j) / (|M_{0,n}| |M_{g_{n+1}}|^2)`, per `j`.
    pub variance_series: Vec<Vec<f64>>,
    /// Partial sums over `n >= 1` of `1 / M_{0,n}(i, j)`, per `j`.
    pub mean_series: Vec<Vec<f64>>,
    pub horizons: Vec<KsHorizon>,
}

/// Kesten-Stigum diagnostics on the fixed environment `env`, which must
/// cover twice the largest horizon.
#[allow(clippy::too_many_arguments)]
pub fn kesten_stigum_diagnostics(
    ens: &EnvironmentEnsemble,
    env: &[usize],
    env_seed: u64,
    ancestor: usize,
    horizons: &[usize],
    small_threshold: f64,
    replicas: usize,
    seeder: &Seeder,
) -> Result<KsReport> {
    crate::walk::check_increasing(horizons)?;
    let p = ens.dim();
    let max = 2 * *horizons.last().expect("non-empty");
    if env.len() < max + 1 {
        return Err(Error::Domain(format!("environment must cover {} generations", max + 1)));
    }

    let mut chain = ProductChain::new(p);
    let mut log_cols = vec![vec![0.0; p]];
    let mut variance_series = vec![Vec::with_capacity(max); p];
    let mut mean_series = vec![Vec::with_capacity(max); p];
    let mut acc_var = vec![0.0; p];
    let mut acc_mean = vec![0.0; p];
    for n in 0..max {
        let norm = if n == 0 { p as f64 } else { chain.log_norm().exp() };
        let next_norm = ens.mean_matrix(env[n + 1]).l1_norm();
        let sigma2 = &ens.atoms()[env[n]].moments.sigma2[ancestor];
        if n >= 1 {
            let np = chain.snapshot();
            for j in 0..p {
                let entry = np.bar_matrix.get(ancestor, j) * np.log_col_sums[j].exp();
                acc_mean[j] += 1.0 / entry;
            }
        }
        for j in 0..p {
            acc_var[j] += sigma2[j] / (norm * next_norm * next_norm);
            variance_series[j].push(acc_var[j]);
            mean_series[j].push(acc_mean[j]);
        }
        chain.push(ens.mean_matrix(env[n]))?;
        log_cols.push((0..p).map(|j| chain.log_col_sum(j)).collect());
    }

    let z = PopulationVector::unit(p, ancestor);
    let sim = BranchingSimulator::new(ens);
    let h = horizons.len();
    // per horizon: p means, p Cauchy terms, extinct, small, small and extinct
    let width = 2 * p + 3;
    let failures = std::sync::atomic::AtomicBool::new(false);
    let est = vector_estimates(replicas, h * width, |r, buf| {
        let mut rng = seeder.stream("kesten-stigum", r as u64);
        let mut st = PopState::new(&z);
        let mut w_at = vec![vec![0.0; p]; max + 1];
        let mut extinct_at = vec![false; max + 1];
        w_at[0] = st.counts.clone();
        for k in 1..=max {
            if !st.is_extinct() && sim.step(env[k - 1], &mut st, &mut rng).is_err() {
                failures.store(true, std::sync::atomic::Ordering::Relaxed);
                return;
            }
            extinct_at[k] = st.is_extinct();
            for j in 0..p {
                w_at[k][j] = st.counts[j] / log_cols[k][j].exp();
            }
        }
        for (hi, &n) in horizons.iter().enumerate() {
            let base = hi * width;
            let small = w_at[n].iter().cloned().fold(0.0, f64::max) < small_threshold;
            for j in 0..p {
                buf[base + j] = w_at[n][j];
                buf[base + p + j] = (w_at[2 * n][j] - w_at[n][j]).powi(2);
            }
            buf[base + 2 * p] = extinct_at[n] as u8 as f64;
            buf[base + 2 * p + 1] = small as u8 as f64;
            buf[base + 2 * p + 2] = (small && extinct_at[n]) as u8 as f64;
        }
    });
    if failures.into_inner() {
        return Err(Error::OverflowGuard);
    }
    let horizons_out = horizons
        .iter()
        .enumerate()
        .map(|(hi, &n)| {
            let base = hi * width;
            let count = |e: &Estimate| (e.value * replicas as f64).round() as usize;
            let small_w = count(&est[base + 2 * p + 1]);
            let small_w_extinct = count(&est[base + 2 * p + 2]);
            Ok(KsHorizon {
                n,
                w_mean: est[base..base + p].to_vec(),
                w_variance: est[base..base + p]
                    .iter()
                    .map(|e| e.stderr * e.stderr * e.count as f64)
                    .collect(),
                cauchy_l2: est[base + p..base + 2 * p].to_vec(),
                extinct: est[base + 2 * p],
                exact_extinction: 1.0 - exact_quenched_survival(ens, env, &z, n)?,
                small_w,
                small_w_extinct,
                coincidence: if small_w > 0 { small_w_extinct as f64 / small_w as f64 } else { f64::NAN },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KsReport {
        env_seed,
        env_indices: env.to_vec(),
        ancestor,
        small_threshold,
        variance_series,
        mean_series,
        horizons: horizons_out,
    })
}
