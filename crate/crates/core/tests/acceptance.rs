//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ...: PASS|FAIL` line to stderr and asserting the pinned
//! tolerance. Run with `cargo test -p bprelab-core --test acceptance`.

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use bprelab::branching::{
    conditioned_snapshots, exact_quenched_survival, quenched_survival_mc, LogPopulationSample, ScaledPopulationSample,
    SurvivalSamples,
};
use bprelab::harness::{run_experiment, with_workers, ExperimentConfig, ExperimentKind, ExperimentReport, RunOptions};
use bprelab::matrix::{act_left, act_right, contraction_coeff, hennion_distance, product_chain, rho};
use bprelab::offspring::{OffspringLaw, OffspringRow};
use bprelab::presets::{critical_branching_family, critical_lattice_walk};
use bprelab::stats::{ecdf, ks_distance, ks_two_sample, rayleigh_cdf};
use bprelab::walk::{conditioned_walk_samples, estimate_sigma2, estimate_v, tau_tail_table, LatticeWalk};
use bprelab::{EnvironmentEnsemble, PopulationVector, PosMatrix, Seeder, SimplexPoint, Stream};
use rand::Rng;

/// Pass/fail line that bypasses libtest output capture.
fn verdict_line(criterion: u32, title: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {criterion:>2} {title}: {status} {detail}");
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(kind: ExperimentKind) -> ExperimentReport {
    let dir = configs_dir();
    let cfg = ExperimentConfig::load(&dir.join(format!("{}.json", kind.tag()))).unwrap();
    run_experiment(kind, &cfg, &RunOptions { force: false, seed: None, base_dir: dir }).unwrap()
}

/// Looks up a verdict and checks that it used exactly `threshold`.
fn pinned<'a>(report: &'a ExperimentReport, name: &str, threshold: f64) -> &'a bprelab::harness::Verdict {
    let v = report.verdict(name).unwrap_or_else(|| panic!("report has no verdict '{name}'"));
    assert_eq!(v.threshold, threshold, "verdict '{name}' threshold drifted");
    v
}

/// A Rayleigh KS verdict: its threshold is `base` plus the recorded sigma widening.
fn widened<'a>(report: &'a ExperimentReport, name: &str, base: f64) -> &'a bprelab::harness::Verdict {
    let v = report.verdict(name).unwrap_or_else(|| panic!("report has no verdict '{name}'"));
    let widen = report.scalars[&format!("{name}_widening")].value;
    assert_eq!(v.threshold, base + widen, "verdict '{name}' threshold drifted");
    v
}

fn describe(vs: &[&bprelab::harness::Verdict]) -> String {
    vs.iter().map(|v| format!("{}={:.4}", v.name, v.statistic)).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// 1. exact-oracle survival equivalence

struct RandomTables {
    p: usize,
    /// `tables[atom][row]` as `(counts, prob)` lists.
    tables: Vec<Vec<Vec<(Vec<u32>, f64)>>>,
}

fn random_tables(rng: &mut Stream) -> RandomTables {
    let p = rng.random_range(2..=3);
    let n_atoms = rng.random_range(1..=3);
    let mut tables = Vec::new();
    for _ in 0..n_atoms {
        let mut rows = Vec::new();
        for _ in 0..p {
            let k = rng.random_range(2..=4);
            let mut atoms: Vec<(Vec<u32>, f64)> = Vec::with_capacity(k);
            // one atom with every type present keeps column sums positive
            atoms.push((vec![1; p], rng.random_range(0.1..1.0)));
            atoms.push((vec![0; p], rng.random_range(0.1..1.0)));
            for _ in 2..k {
                atoms.push(((0..p).map(|_| rng.random_range(0..=2)).collect(), rng.random_range(0.1..1.0)));
            }
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            for a in &mut atoms {
                a.1 /= total;
            }
            rows.push(atoms);
        }
        tables.push(rows);
    }
    RandomTables { p, tables }
}

impl RandomTables {
    fn ensemble(&self) -> EnvironmentEnsemble {
        let w = 1.0 / self.tables.len() as f64;
        let atoms = self
            .tables
            .iter()
            .map(|rows| {
                let rows = rows.iter().map(|r| OffspringRow::table(self.p, r.clone()).unwrap()).collect();
                (w, OffspringLaw::new(rows).unwrap())
            })
            .collect();
        EnvironmentEnsemble::new(atoms).unwrap()
    }

    /// `P(Z_n != 0)` by backward composition of the row generating functions.
    fn survival(&self, env: &[usize], z: &[u64]) -> f64 {
        let mut s = vec![0.0f64; self.p];
        for &atom in env.iter().rev() {
            s = self.tables[atom]
                .iter()
                .map(|row| row.iter().map(|(c, q)| q * c.iter().zip(&s).map(|(&k, &si)| si.powi(k as i32)).product::<f64>()).sum())
                .collect();
        }
        1.0 - s.iter().zip(z).map(|(&q, &k)| q.powi(k as i32)).product::<f64>()
    }
}

#[test]
fn criterion_01_exact_oracle_survival() {
    const CASES: usize = 20;
    const REPLICAS: usize = 1_000_000;
    const SIGMAS: f64 = 4.0;
    const REQUIRED: usize = 19;
    let seeder = Seeder::new(1);
    let mut agree = 0;
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = seeder.stream("criterion-1-case", case as u64);
        let t = random_tables(&mut rng);
        let ens = t.ensemble();
        let n = rng.random_range(1..=10);
        let env: Vec<usize> = (0..n).map(|_| rng.random_range(0..t.tables.len())).collect();
        let mut z: Vec<u64> = (0..t.p).map(|_| rng.random_range(0..=2)).collect();
        if z.iter().all(|&k| k == 0) {
            z[0] = 1;
        }
        let oracle = t.survival(&env, &z);
        let pz = PopulationVector::new(z);
        let library = exact_quenched_survival(&ens, &env, &pz, n).unwrap();
        assert!((library - oracle).abs() <= 1e-12, "case {case}: library oracle {library} vs test oracle {oracle}");
        let mc = quenched_survival_mc(&ens, &env, &pz, n, REPLICAS, &seeder.child(&format!("case{case}"))).unwrap();
        let z_score = mc.z_score(oracle);
        worst = worst.max(z_score);
        agree += (z_score <= SIGMAS) as usize;
    }
    let pass = agree >= REQUIRED;
    verdict_line(1, "exact-oracle survival", pass, &format!("{agree}/{CASES} within {SIGMAS} se (worst z={worst:.2})"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2. lattice DP equivalence

/// Killed-walk law on levels `a + k h` for i.i.d. `+-h` steps with probability 1/2.
struct PlusMinusDp {
    a: f64,
    h: f64,
    /// `(k, mass)` with `a + k h > 0`.
    mass: Vec<(i64, f64)>,
}

impl PlusMinusDp {
    fn new(a: f64, h: f64) -> Self {
        Self { a, h, mass: vec![(0, 1.0)] }
    }

    fn level(&self, k: i64) -> f64 {
        self.a + k as f64 * self.h
    }

    fn step(&mut self) {
        let mut next: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
        for &(k, m) in &self.mass {
            for d in [-1, 1] {
                if self.level(k + d) > 1e-9 {
                    *next.entry(k + d).or_default() += 0.5 * m;
                }
            }
        }
        self.mass = next.into_iter().collect();
    }

    fn survival(&self) -> f64 {
        self.mass.iter().map(|m| m.1).sum()
    }

    fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.mass.iter().map(|&(k, m)| m * f(self.level(k))).sum()
    }

    fn conditioned_quantile(&self, q: f64) -> f64 {
        let total = self.survival();
        let mut acc = 0.0;
        for &(k, m) in &self.mass {
            acc += m;
            if acc >= q * total {
                return self.level(k);
            }
        }
        self.level(self.mass.last().unwrap().0)
    }
}

#[test]
fn criterion_02_lattice_dp_equivalence() {
    const HORIZONS: [usize; 3] = [16, 64, 256];
    const REPLICAS: usize = 400_000;
    const SIGMAS: f64 = 3.0;
    const QUANTILES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
    let ens = critical_lattice_walk(2.0).unwrap();
    let h = 2f64.ln();
    let a = 0.5;
    let x = SimplexPoint::barycenter(2);
    let seeder = Seeder::new(2);
    let lattice = LatticeWalk::from_ensemble(&ens).unwrap();

    let tail = tau_tail_table(&ens, &x, a, &HORIZONS, REPLICAS, &seeder.child("tail")).unwrap();
    let mut dp = PlusMinusDp::new(a, h);
    let mut lib_dp = lattice.forward(a);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut compared = 0;
    let mut check = |what: String, z: f64| {
        compared += 1;
        worst = worst.max(z);
        if z > SIGMAS {
            failures.push(format!("{what} z={z:.2}"));
        }
    };
    for (hi, &n) in HORIZONS.iter().enumerate() {
        while lib_dp.horizon() < n {
            dp.step();
            lib_dp.step();
        }
        let survival = dp.survival();
        let mean = dp.expectation(|s| s);
        assert!((lib_dp.survival() - survival).abs() < 1e-12);
        assert!((lib_dp.expectation(|s| s) - mean).abs() < 1e-12);

        check(format!("P(tau>{n})"), tail[hi].estimate.z_score(survival));

        let v = estimate_v(&ens, &x, a, n, REPLICAS, &seeder.child(&format!("v{n}"))).unwrap();
        check(format!("V({n})"), (v.value - mean).abs() / v.stderr);

        let cond = conditioned_walk_samples(&ens, &x, a, n, REPLICAS, &seeder.child(&format!("cond{n}"))).unwrap();
        let root = (n as f64).sqrt();
        let levels: Vec<f64> = cond.values.iter().map(|v| v * root).collect();
        let m = bprelab::Estimate::from_samples(&levels);
        check(format!("E[S_{n}|tau>n]"), m.z_score(mean / survival));

        let k = levels.len() as f64;
        for q in QUANTILES {
            // midway between lattice levels, so no sample sits on the boundary
            let t = dp.conditioned_quantile(q) + 0.5 * h;
            let exact = dp.expectation(|s| (s <= t) as u8 as f64) / survival;
            let emp = ecdf(&levels, t);
            let se = (exact * (1.0 - exact) / k).sqrt();
            check(format!("F_{n}({t:.3})"), (emp - exact).abs() / se);
        }
    }
    let pass = failures.is_empty();
    verdict_line(
        2,
        "lattice DP equivalence",
        pass,
        &format!("{compared} comparisons, worst z={worst:.2} (limit {SIGMAS}) {}", failures.join(", ")),
    );
    assert!(pass, "{failures:?}");
}

// ---------------------------------------------------------------------------
// 3. tau-tail scaling

#[test]
fn criterion_03_tau_tail_scaling() {
    let r = shipped(ExperimentKind::TauTail);
    assert_eq!(r.config.horizons, vec![256, 512, 1024]);
    assert_eq!(r.config.replicas, 1_000_000);
    let vs = [pinned(&r, "flatness", 1.15), pinned(&r, "level_relative_error", 0.2)];
    let pass = vs.iter().all(|v| v.pass);
    verdict_line(3, "tau-tail scaling", pass, &describe(&vs));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4, 5, 7. conditioned population statistics from one shared simulation

const SHARED_HORIZONS: [usize; 4] = [64, 256, 512, 1024];
const SHARED_REPLICAS: usize = 1_600_000;
const MIN_ACCEPTED: usize = 10_000;

struct Shared {
    samples: SurvivalSamples,
    sigma: f64,
}

fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let ens = critical_branching_family(2.0).unwrap();
        let seeder = Seeder::new(5);
        let z = PopulationVector::unit(2, 0);
        let samples =
            conditioned_snapshots(&ens, &z, &SHARED_HORIZONS, SHARED_REPLICAS, &seeder, "acceptance-population").unwrap();
        let s2 = estimate_sigma2(&ens, 1024, 4000, 64, &seeder.child("sigma")).unwrap();
        Shared { samples, sigma: s2.value.sqrt() }
    })
}

fn rayleigh_ks(values: &[f64], sigma: f64) -> f64 {
    ks_distance(values, |t| rayleigh_cdf(t.max(0.0), sigma).unwrap()).unwrap()
}

#[test]
fn criterion_04_conditioned_rayleigh_walk() {
    const KS_WALK: f64 = 0.05;
    const KS_POPULATION: f64 = 0.07;
    let r = shipped(ExperimentKind::RayleighWalk);
    assert_eq!(r.config.horizons.last(), Some(&1024));
    let accepted = pinned(&r, "accepted", MIN_ACCEPTED as f64);
    let ks = widened(&r, "ks_rayleigh", KS_WALK);

    let s = shared();
    let lp = LogPopulationSample::from_snapshots(&s.samples, 1024).unwrap();
    let ks_pop = rayleigh_ks(&lp.walk, s.sigma);
    let pass_pop = ks_pop <= KS_POPULATION && lp.walk.len() >= MIN_ACCEPTED;

    let pass = accepted.pass && ks.pass && ks.statistic <= KS_WALK && pass_pop;
    verdict_line(
        4,
        "conditioned Rayleigh (walk)",
        pass,
        &format!(
            "{} ks_given_population_survival={ks_pop:.4}<= {KS_POPULATION} accepted={}",
            describe(&[accepted, ks]),
            lp.walk.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_log_population_clt() {
    const KS: f64 = 0.07;
    const EPS: f64 = 0.25;
    let s = shared();
    let early = LogPopulationSample::from_snapshots(&s.samples, 256).unwrap();
    let late = LogPopulationSample::from_snapshots(&s.samples, 1024).unwrap();
    let ks = rayleigh_ks(&late.log_population, s.sigma);
    let c_early = early.coupling_exceedance(EPS).value;
    let c_late = late.coupling_exceedance(EPS).value;
    let accepted = late.log_population.len();
    let pass = ks <= KS && accepted >= MIN_ACCEPTED && c_late < c_early;
    verdict_line(
        5,
        "log-population CLT",
        pass,
        &format!("ks={ks:.4}<= {KS} accepted={accepted} coupling n=256 {c_early:.4} > n=1024 {c_late:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_scaled_population_mass() {
    const DELTA: f64 = 0.01;
    const KS: f64 = 0.05;
    let s = shared();
    let mass: Vec<f64> = [64, 256, 1024]
        .iter()
        .map(|&n| ScaledPopulationSample::from_snapshots(&s.samples, n, 0).unwrap().mass_below(DELTA).value)
        .collect();
    let a = ScaledPopulationSample::from_snapshots(&s.samples, 512, 0).unwrap();
    let b = ScaledPopulationSample::from_snapshots(&s.samples, 1024, 0).unwrap();
    let ks = ks_two_sample(&a.values, &b.values).unwrap();
    let monotone = mass.windows(2).all(|w| w[1] <= w[0]);
    let pass = monotone && ks <= KS;
    verdict_line(
        7,
        "scaled population mass near zero",
        pass,
        &format!("mass[0,{DELTA}] at 64/256/1024 = {mass:.4?} two_sample_ks(512,1024)={ks:.4}<= {KS}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6. survival scaling

#[test]
fn criterion_06_survival_scaling() {
    let r = shipped(ExperimentKind::Survival);
    assert_eq!(r.config.horizons.first(), Some(&64));
    assert_eq!(r.config.horizons.last(), Some(&1024));
    let vs = [pinned(&r, "inverse_sqrt_residual", 0.1), pinned(&r, "monotone_in_z", -1e-12)];
    let pass = vs.iter().all(|v| v.pass);
    verdict_line(6, "survival scaling", pass, &describe(&vs));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. Doob transform

#[test]
fn criterion_08_doob_transform() {
    let r = shipped(ExperimentKind::SeriesCheck);
    assert_eq!(r.config.doob_steps, vec![1, 4, 16, 64]);
    let mut vs: Vec<_> = [1, 4, 16, 64].iter().map(|k| pinned(&r, &format!("doob_weight_k{k}"), 3.0)).collect();
    vs.push(pinned(&r, "series_increment_residual", 0.3));
    let pass = vs.iter().all(|v| v.pass);
    verdict_line(8, "Doob transform", pass, &describe(&vs));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. matrix invariants

const CASES: usize = 1000;

fn random_matrix(rng: &mut Stream, p: usize, lo: f64, hi: f64) -> PosMatrix {
    PosMatrix::new(p, (0..p * p).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Entries in `[s, s B]` for a random scale `s`, so the matrix lies in `S+(B)`.
fn class_b_matrix(rng: &mut Stream, p: usize, b: f64) -> PosMatrix {
    let scale = rng.random_range(0.1..10.0);
    PosMatrix::new(p, (0..p * p).map(|_| scale * rng.random_range(1.0..b)).collect()).unwrap()
}

fn random_point(rng: &mut Stream, p: usize) -> SimplexPoint {
    // sparse points now and then exercise the boundary of the simplex
    let coords: Vec<f64> = (0..p).map(|_| if rng.random_bool(0.1) { 0.0 } else { -rng.random::<f64>().ln() }).collect();
    if coords.iter().all(|&c| c == 0.0) {
        SimplexPoint::basis(p, rng.random_range(0..p))
    } else {
        SimplexPoint::new(coords).unwrap()
    }
}

fn l1_distance(x: &SimplexPoint, y: &SimplexPoint) -> f64 {
    x.coords().iter().zip(y.coords()).map(|(a, b)| (a - b).abs()).sum()
}

fn direct_log_norm(ms: &[PosMatrix]) -> f64 {
    let p = ms[0].dim();
    let mut acc = PosMatrix::identity(p);
    for m in ms {
        acc = acc.mul(m);
    }
    acc.l1_norm().ln()
}

fn product(factors: &[PosMatrix]) -> PosMatrix {
    factors[1..].iter().fold(factors[0].clone(), |acc, f| acc.mul(f))
}

/// `max(|M| / min_{x,y} y M x, |M||N| / |MN|)`, checking along the way that
/// the product stays in `S+(B^2)` and that random simplex pairs respect the
/// basis-pair minimum.
fn comparison_ratio(ms: &[PosMatrix], ns: &[PosMatrix], b: f64, rng: &mut Stream) -> f64 {
    let (m, n) = (product(ms), product(ns));
    let ratio = m.entry_ratio();
    assert!(ratio <= b * b * (1.0 + 1e-12), "product entry ratio {ratio} exceeds B^2");
    // y M x is bilinear, so its minimum over the simplex sits at a basis pair
    let min_entry = m.entries().iter().cloned().fold(f64::INFINITY, f64::min);
    let p = m.dim();
    let (y, x) = (random_point(rng, p), random_point(rng, p));
    let ymx: f64 = m.row_times(y.coords()).iter().zip(x.coords()).map(|(a, b)| a * b).sum();
    assert!(ymx >= min_entry * (1.0 - 1e-12));
    (m.l1_norm() / min_entry).max(m.l1_norm() * n.l1_norm() / m.mul(&n).l1_norm())
}

/// Coordinate ascent that moves single factor entries to an end of the
/// factor's range `[s, s B]` while the ratio grows.
fn ascend(mut ms: Vec<PosMatrix>, mut ns: Vec<PosMatrix>, b: f64, rng: &mut Stream) -> f64 {
    let p = ms[0].dim();
    let mut best = comparison_ratio(&ms, &ns, b, rng);
    let mut improved = true;
    while improved {
        improved = false;
        for which in 0..ms.len() + ns.len() {
            for e in 0..p * p {
                let f = if which < ms.len() { &ms[which] } else { &ns[which - ms.len()] };
                let lo = f.entries().iter().cloned().fold(f64::INFINITY, f64::min);
                for target in [lo, lo * b] {
                    let mut entries = f.entries().to_vec();
                    if entries[e] == target {
                        continue;
                    }
                    entries[e] = target;
                    let candidate = PosMatrix::new(p, entries).unwrap();
                    let (mut ms2, mut ns2) = (ms.clone(), ns.clone());
                    if which < ms.len() {
                        ms2[which] = candidate;
                    } else {
                        ns2[which - ms.len()] = candidate;
                    }
                    let r = comparison_ratio(&ms2, &ns2, b, rng);
                    if r > best * (1.0 + 1e-12) {
                        best = r;
                        (ms, ns) = (ms2, ns2);
                        improved = true;
                        break;
                    }
                }
            }
        }
    }
    best
}

/// Fitted comparison constant for products of 1 to 4 factors from `S+(B)`:
/// the largest ratio over random products, refined by ascent from the
/// hundred largest.
fn fitted_comparison_constant(seed: u64, b: f64) -> f64 {
    let mut rng = Seeder::new(seed).stream("criterion-9-comparison", b as u64);
    let p = 3;
    let mut cases: Vec<(f64, Vec<PosMatrix>, Vec<PosMatrix>)> = (0..CASES)
        .map(|_| {
            let ms: Vec<PosMatrix> = (0..rng.random_range(1..=4)).map(|_| class_b_matrix(&mut rng, p, b)).collect();
            let ns: Vec<PosMatrix> = (0..rng.random_range(1..=4)).map(|_| class_b_matrix(&mut rng, p, b)).collect();
            (comparison_ratio(&ms, &ns, b, &mut rng), ms, ns)
        })
        .collect();
    cases.sort_by(|x, y| y.0.total_cmp(&x.0));
    cases.truncate(100);
    cases.into_iter().map(|(_, ms, ns)| ascend(ms, ns, b, &mut rng)).fold(0.0, f64::max)
}

#[test]
fn criterion_09_matrix_invariants() {
    let start = Instant::now();
    let mut rng = Seeder::new(9).stream("criterion-9", 0);
    let mut notes = Vec::new();

    // cocycle
    let mut worst: f64 = 0.0;
    for _ in 0..CASES {
        let p = rng.random_range(2..=4);
        let x = random_point(&mut rng, p);
        let m = random_matrix(&mut rng, p, 0.1, 10.0);
        let n = random_matrix(&mut rng, p, 0.1, 10.0);
        let lhs = rho(&x, &m.mul(&n)).unwrap();
        let rhs = rho(&act_right(&x, &m).unwrap(), &n).unwrap() + rho(&x, &m).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    assert!(worst <= 1e-10, "cocycle defect {worst}");
    notes.push(format!("cocycle={worst:.1e}"));

    // norm sandwich
    for _ in 0..CASES {
        let p = rng.random_range(2..=4);
        let m = random_matrix(&mut rng, p, 0.0, 10.0);
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..5.0)).collect();
        let x1: f64 = x.iter().sum();
        let mx: f64 = m.times_col(&x).iter().sum();
        assert!(m.min_col_sum() * x1 <= mx * (1.0 + 1e-12));
        assert!(mx <= m.l1_norm() * x1 * (1.0 + 1e-12));
    }

    // distance clauses and contraction
    for _ in 0..CASES {
        let p = rng.random_range(2..=4);
        let x = random_point(&mut rng, p);
        let y = random_point(&mut rng, p);
        let d = hennion_distance(&x, &y);
        assert!((0.0..=1.0).contains(&d));
        assert!(l1_distance(&x, &y) <= 2.0 * d + 1e-12);
        let m = random_matrix(&mut rng, p, 0.0, 10.0);
        let n = random_matrix(&mut rng, p, 0.1, 10.0);
        let (Ok(cm), Ok(cn)) = (contraction_coeff(&m), contraction_coeff(&n)) else { continue };
        if let (Ok(mx), Ok(my)) = (act_left(&m, &x), act_left(&m, &y)) {
            assert!(hennion_distance(&mx, &my) <= cm * d + 1e-12);
        }
        assert!(contraction_coeff(&m.mul(&n)).unwrap() <= cm * cn + 1e-12);
    }

    // contraction strictly below one on S+(B), stable across seeds
    for b in [2.0f64, 5.0, 10.0] {
        let bound = (1.0 - b.powi(-2)) / (1.0 + b.powi(-2));
        let maxima: Vec<f64> = (0..3)
            .map(|seed| {
                let mut r = Seeder::new(seed).stream("criterion-9-class-b", b as u64);
                (0..CASES)
                    .map(|_| {
                        let p = r.random_range(2..=4);
                        let m = class_b_matrix(&mut r, p, b);
                        assert!(m.in_class_b(b));
                        contraction_coeff(&m).unwrap()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(maxima.iter().all(|&r| r <= bound), "B={b}: {maxima:?} above {bound}");
        notes.push(format!("rho_{b}={:.3}", maxima.iter().cloned().fold(0.0, f64::max)));
    }

    // comparison constants on products, fitted per seed
    for b in [2.0, 5.0, 10.0] {
        let cs: Vec<f64> = (0..10).map(|seed| fitted_comparison_constant(seed, b)).collect();
        let mean = cs.iter().sum::<f64>() / cs.len() as f64;
        let spread = cs.iter().map(|c| (c / mean - 1.0).abs()).fold(0.0, f64::max);
        assert!(spread <= 0.1, "B={b}: fitted constants {cs:?} vary by {spread}");
        notes.push(format!("c({b})={mean:.1}"));
    }

    // contraction coefficient is attained on basis pairs
    for _ in 0..200 {
        let p = rng.random_range(2..=4);
        let m = random_matrix(&mut rng, p, 0.0, 10.0);
        let Ok(coeff) = contraction_coeff(&m) else { continue };
        for _ in 0..10_000 {
            let x = random_point(&mut rng, p);
            let y = random_point(&mut rng, p);
            if let (Ok(mx), Ok(my)) = (act_left(&m, &x), act_left(&m, &y)) {
                assert!(hennion_distance(&mx, &my) <= coeff + 1e-9);
            }
        }
    }

    // normalized products against direct products
    for _ in 0..CASES {
        let p = rng.random_range(2..=4);
        let len = rng.random_range(1..=20);
        let ms: Vec<PosMatrix> = (0..len).map(|_| random_matrix(&mut rng, p, 0.1, 2.0)).collect();
        let np = product_chain(&ms).unwrap();
        let direct = direct_log_norm(&ms);
        assert!((np.log_norm - direct).abs() <= 1e-8 * direct.abs().max(1.0));
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = secs < 10.0;
    verdict_line(9, "matrix invariants", pass, &format!("{} in {secs:.2}s (< 10s)", notes.join(" ")));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 10. Kesten-Stigum diagnostics

#[test]
fn criterion_10_kesten_stigum() {
    let r = shipped(ExperimentKind::KestenStigum);
    assert_eq!(r.config.horizons, vec![4, 8, 16, 32]);
    let vs = [
        pinned(&r, "cauchy_decreasing_j0", 0.0),
        pinned(&r, "cauchy_decreasing_j1", 0.0),
        pinned(&r, "coincidence", 0.95),
        pinned(&r, "extinction_oracle_sigmas", 4.0),
    ];
    let pass = vs.iter().all(|v| v.pass);
    verdict_line(10, "Kesten-Stigum diagnostics", pass, &describe(&vs));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 11. local limit bound

#[test]
fn criterion_11_local_limit() {
    let r = shipped(ExperimentKind::LocalLimit);
    assert_eq!(r.config.horizons, vec![64, 256, 1024]);
    assert_eq!(r.config.cells, vec![0.0, 1.0, 2.0]);
    let vs: Vec<_> = (0..3).map(|b| pinned(&r, &format!("local_limit_ratio_b{b}"), 3.0)).collect();
    let pass = vs.iter().all(|v| v.pass);
    verdict_line(11, "local limit bound", pass, &describe(&vs));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 12. determinism

fn small_config(kind: ExperimentKind) -> ExperimentConfig {
    let text = match kind {
        ExperimentKind::Survival => r#"{"ensemble": "critical.json", "horizons": [8, 32], "env_replicas": 600, "seed": 12}"#,
        ExperimentKind::TauTail => {
            r#"{"ensemble": "critical.json", "horizons": [16, 64], "replicas": 3000, "harmonic": {"horizon": 32, "replicas": 2000}, "sigma": {"horizon": 64, "replicas": 500, "burn_in": 8}, "seed": 12}"#
        }
        ExperimentKind::RayleighLogpop => {
            r#"{"ensemble": "critical.json", "z": [1, 0], "horizons": [16, 32], "replicas": 6000, "sigma": {"horizon": 64, "replicas": 500, "burn_in": 8}, "seed": 12}"#
        }
        ExperimentKind::KestenStigum => r#"{"ensemble": "supercritical.json", "horizons": [2, 4], "replicas": 700, "seed": 12}"#,
        ExperimentKind::LocalLimit => r#"{"ensemble": "critical.json", "a": 0.1, "horizons": [8, 16], "replicas": 3000, "seed": 12}"#,
        ExperimentKind::Calibrate => r#"{"ensemble": "critical.json", "lyapunov": {"horizon": 32, "replicas": 300}, "seed": 12}"#,
        _ => unreachable!(),
    };
    ExperimentConfig::from_json(text).unwrap()
}

fn rendered(report: &ExperimentReport) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_12_determinism() {
    let ens_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../ensembles");
    let opts = RunOptions { force: true, seed: None, base_dir: ens_dir };
    let kinds = [
        ExperimentKind::Survival,
        ExperimentKind::TauTail,
        ExperimentKind::RayleighLogpop,
        ExperimentKind::KestenStigum,
        ExperimentKind::LocalLimit,
        ExperimentKind::Calibrate,
    ];
    let mut checked = 0;
    for kind in kinds {
        let cfg = small_config(kind);
        let baseline = rendered(&with_workers(1, || run_experiment(kind, &cfg, &opts)).unwrap().unwrap());
        assert!(baseline.iter().any(|(name, _)| name == "report.json"));
        for workers in [1, 4, 8] {
            let again = rendered(&with_workers(workers, || run_experiment(kind, &cfg, &opts)).unwrap().unwrap());
            assert!(again == baseline, "{kind} output differs with {workers} workers");
            checked += 1;
        }
    }
    verdict_line(12, "determinism", true, &format!("{checked} reruns byte-identical across 1/4/8 workers"));
}
