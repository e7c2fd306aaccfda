//! Experiment orchestration: configuration, dispatch, verdicts and output.

mod config;
mod ensemble_file;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

pub use config::{ExperimentConfig, ExperimentKind, HarmonicBudget, SigmaBudget, Thresholds};
pub use ensemble_file::{AtomSpec, Decimal, EnsembleFile, GeometricParams, RowSpec, TableAtom, TiltSpec};
pub use report::{
    emit_csv, parse_csv, CalibrationArtifact, ExperimentReport, Relation, SeedSource, Table, TableRow, Timing,
    Verdict, CSV_HEADER,
};

use crate::branching::{
    beta_z_table, conditioned_snapshots, kesten_stigum_diagnostics, survival_monotonicity, LogPopulationSample,
    PopulationVector, ScaledPopulationSample,
};
use crate::environment::{
    calibrate_critical, estimate_lyapunov, sample_env_sequence, validate_hypotheses, EnvironmentEnsemble,
    HypothesisReport,
};
use crate::error::{Error, Result};
use crate::matrix::SimplexPoint;
use crate::offspring::validate_class;
use crate::rng::Seeder;
use crate::stats::{fit_inverse_sqrt, ks_test, max_min_ratio, rayleigh_cdf_dsigma, rayleigh_cdf_unchecked, Estimate};
use crate::walk::harmonic::{doob_expectation, series_partial_sums, Harmonic, MonteCarloHarmonic};
use crate::walk::lattice::LatticeWalk;
use crate::walk::{conditioned_walk_samples, estimate_sigma2, estimate_v, local_limit_cells, tau_tail_table};

/// Caller-side settings that are not part of the experiment definition.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run limit-theorem experiments even when the hypothesis gate fails.
    pub force: bool,
    /// Seed taking precedence over the config value.
    pub seed: Option<(u64, SeedSource)>,
    /// Directory that relative ensemble paths are resolved against.
    pub base_dir: PathBuf,
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate(kind)?;
    let (seed, seed_source) = opts.seed.unwrap_or((cfg.seed, SeedSource::Config));
    let ens = EnsembleFile::load(&opts.base_dir.join(&cfg.ensemble))?.to_ensemble()?;
    let mut ctx = Context {
        cfg,
        th: cfg.thresholds,
        seeder: Seeder::new(seed),
        ens,
        hypotheses: None,
        scalars: BTreeMap::new(),
        tables: Vec::new(),
        verdicts: Vec::new(),
        calibration: None,
    };
    ctx.gate(kind, opts.force)?;
    match kind {
        ExperimentKind::Validate => ctx.validate()?,
        ExperimentKind::Lyapunov => ctx.lyapunov()?,
        ExperimentKind::Calibrate => ctx.calibrate()?,
        ExperimentKind::Survival => ctx.survival()?,
        ExperimentKind::TauTail => ctx.tau_tail()?,
        ExperimentKind::RayleighWalk => ctx.rayleigh_walk()?,
        ExperimentKind::RayleighLogpop => ctx.rayleigh_logpop()?,
        ExperimentKind::ScaledPopulation => ctx.scaled_population()?,
        ExperimentKind::KestenStigum => ctx.kesten_stigum()?,
        ExperimentKind::SeriesCheck => ctx.series_check()?,
        ExperimentKind::LocalLimit => ctx.local_limit()?,
    }
    Ok(ExperimentReport {
        kind,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        seed_source,
        forced: opts.force,
        config: cfg.clone(),
        hypotheses: ctx.hypotheses,
        scalars: ctx.scalars,
        tables: ctx.tables,
        verdicts: ctx.verdicts,
        calibration: ctx.calibration,
    })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    th: Thresholds,
    seeder: Seeder,
    ens: EnvironmentEnsemble,
    hypotheses: Option<HypothesisReport>,
    scalars: BTreeMap<String, Estimate>,
    tables: Vec<Table>,
    verdicts: Vec<Verdict>,
    calibration: Option<CalibrationArtifact>,
}

fn hypothesis_verdicts(h: &HypothesisReport) -> Vec<Verdict> {
    [("H1", &h.h1), ("H2", &h.h2), ("H3", &h.h3), ("H4", &h.h4), ("H5", &h.h5), ("H6", &h.h6), ("G", &h.class_g)]
        .into_iter()
        .map(|(name, c)| Verdict::at_least(format!("hypothesis_{name}"), c.status.is_pass() as u8 as f64, 1.0))
        .collect()
}

impl Context<'_> {
    fn z(&self) -> Result<PopulationVector> {
        let p = self.ens.dim();
        let z = match &self.cfg.z {
            Some(c) => PopulationVector::new(c.clone()),
            None => PopulationVector::unit(p, 0),
        };
        if z.dim() != p || z.is_zero() {
            return Err(Error::Config(format!("z must be a non-zero vector of length {p}")));
        }
        Ok(z)
    }

    fn x0(&self) -> Result<SimplexPoint> {
        match &self.cfg.x0 {
            Some(x) if x.len() == self.ens.dim() => SimplexPoint::new(x.clone()),
            Some(_) => Err(Error::Config(format!("x0 must have length {}", self.ens.dim()))),
            None => Ok(SimplexPoint::barycenter(self.ens.dim())),
        }
    }

    fn horizon_max(&self) -> usize {
        *self.cfg.horizons.last().expect("validated")
    }

    fn table(&mut self, name: impl Into<String>, rows: impl IntoIterator<Item = (usize, Estimate)>) {
        let mut t = Table::new(name);
        for (n, e) in rows {
            t.push(n, e);
        }
        self.tables.push(t);
    }

    fn gate(&mut self, kind: ExperimentKind, force: bool) -> Result<()> {
        let failing = if kind.needs_critical_gate() {
            let h = self.hypotheses_report("gate")?;
            let failing = h.failing();
            self.hypotheses = Some(h);
            failing
        } else if kind == ExperimentKind::KestenStigum {
            let mut ok = true;
            for a in self.ens.atoms() {
                ok &= a.weight == 0.0 || validate_class(&a.law, self.cfg.epsilon, self.cfg.k_bound)?.passes();
            }
            if ok {
                Vec::new()
            } else {
                vec!["G"]
            }
        } else {
            return Ok(());
        };
        if !failing.is_empty() && !force {
            return Err(Error::GateFailed(format!("{kind} requires {} to hold", failing.join(", "))));
        }
        Ok(())
    }

    fn hypotheses_report(&self, label: &str) -> Result<HypothesisReport> {
        validate_hypotheses(
            &self.ens,
            self.cfg.delta,
            self.cfg.epsilon,
            self.cfg.k_bound,
            self.cfg.lyapunov,
            &self.seeder.child(label),
        )
    }

    /// `sigma_hat` and its standard error.
    fn sigma(&mut self) -> Result<(f64, f64)> {
        let b = self.cfg.sigma;
        let s2 = estimate_sigma2(&self.ens, b.horizon, b.replicas, b.burn_in, &self.seeder.child("sigma"))?;
        self.scalars.insert("sigma2".into(), s2);
        if !(s2.value > 0.0) {
            return Err(Error::Domain("estimated sigma^2 is not positive".into()));
        }
        let sigma = s2.value.sqrt();
        Ok((sigma, s2.stderr / (2.0 * sigma)))
    }

    /// KS distance to the Rayleigh law with the threshold widened by the
    /// uncertainty in `sigma_hat` at the maximizing point.
    fn rayleigh_verdict(&mut self, name: &str, samples: &[f64], threshold: f64, sigma: (f64, f64)) -> Result<()> {
        let ks = ks_test(samples, |t| rayleigh_cdf_unchecked(t.max(0.0), sigma.0))?;
        let widen = 2.0 * rayleigh_cdf_dsigma(ks.argmax.max(0.0), sigma.0).abs() * sigma.1;
        self.scalars.insert(format!("{name}_widening"), Estimate::exact(widen));
        self.verdicts.push(Verdict::at_most(name, ks.statistic, threshold + widen));
        Ok(())
    }

    fn validate(&mut self) -> Result<()> {
        let h = self.hypotheses_report("validate")?;
        self.verdicts.extend(hypothesis_verdicts(&h));
        let w = &h.h4.witness;
        self.scalars.insert(
            "lyapunov".into(),
            Estimate { value: w["pi_hat"], stderr: w["stderr"], count: w["replicas"] as usize },
        );
        self.hypotheses = Some(h);
        Ok(())
    }

    fn lyapunov(&mut self) -> Result<()> {
        let mut rows = Vec::new();
        for &n in &self.cfg.horizons {
            if n == 0 {
                return Err(Error::Config("lyapunov horizons must be positive".into()));
            }
            rows.push((n, estimate_lyapunov(&self.ens, n, self.cfg.replicas, &self.seeder.child(&format!("n{n}")))?));
        }
        let last = rows.last().expect("validated").1;
        self.verdicts.push(Verdict::at_most(
            "critical",
            last.value.abs(),
            self.th.weight_sigmas * last.stderr + 1e-12,
        ));
        self.table("lyapunov", rows);
        Ok(())
    }

    fn calibrate(&mut self) -> Result<()> {
        let cal = calibrate_critical(&self.ens, self.th.calibration_tol, self.cfg.lyapunov, &self.seeder)?;
        self.table("calibration", cal.history.iter().enumerate().map(|(i, s)| (i, s.estimate)));
        self.verdicts.push(Verdict::at_most("lyapunov_abs", cal.estimate.value.abs(), self.th.calibration_tol));
        self.scalars.insert("lyapunov".into(), cal.estimate);
        self.calibration = Some(CalibrationArtifact {
            source: self.cfg.ensemble.display().to_string(),
            knob: cal.knob,
            lyapunov: cal.estimate,
            evaluations: cal.history.len(),
            ensemble: EnsembleFile::from_ensemble(&cal.ensemble)?,
        });
        Ok(())
    }

    fn survival(&mut self) -> Result<()> {
        let z = self.z()?;
        let rows = beta_z_table(&self.ens, &z, &self.cfg.horizons, self.cfg.env_replicas, &self.seeder)?;
        self.table("survival", rows.iter().map(|r| (r.n, r.survival)));
        self.table("scaled_survival", rows.iter().map(|r| (r.n, r.scaled)));
        let fitted: Vec<_> = rows.iter().filter(|r| r.n > 0).collect();
        if fitted.len() >= 2 {
            let ns: Vec<f64> = fitted.iter().map(|r| r.n as f64).collect();
            let vs: Vec<f64> = fitted.iter().map(|r| r.survival.value).collect();
            let fit = fit_inverse_sqrt(&ns, &vs)?;
            self.verdicts.push(Verdict::at_most("inverse_sqrt_residual", fit.max_relative_residual, self.th.fit_residual));
        }
        let gain = survival_monotonicity(
            &self.ens,
            &z,
            &self.cfg.horizons,
            self.cfg.env_replicas.min(2000),
            &self.seeder.child("monotone"),
        )?;
        self.verdicts.push(Verdict::at_least("monotone_in_z", gain, -1e-12));
        Ok(())
    }

    fn tau_tail(&mut self) -> Result<()> {
        let x = self.x0()?;
        let a = self.cfg.a;
        let rows = tau_tail_table(&self.ens, &x, a, &self.cfg.horizons, self.cfg.replicas, &self.seeder)?;
        let scaled: Vec<(usize, Estimate)> = rows
            .iter()
            .map(|r| {
                let f = (r.n as f64).sqrt();
                (r.n, Estimate { value: r.scaled, stderr: f * r.estimate.stderr, count: r.estimate.count })
            })
            .collect();
        self.table("tau_tail", rows.iter().map(|r| (r.n, r.estimate)));
        let values: Vec<f64> = scaled.iter().map(|s| s.1.value).collect();
        self.verdicts.push(Verdict::at_most("flatness", max_min_ratio(&values), self.th.flatness));
        let positive: Vec<&(usize, Estimate)> = scaled.iter().filter(|s| s.0 > 0).collect();
        if positive.len() >= 2 {
            let ns: Vec<f64> = positive.iter().map(|s| s.0 as f64).collect();
            let vs: Vec<f64> = positive.iter().map(|s| s.1.value / (s.0 as f64).sqrt()).collect();
            let fit = fit_inverse_sqrt(&ns, &vs)?;
            self.verdicts.push(Verdict::at_most("inverse_sqrt_residual", fit.max_relative_residual, self.th.fit_residual));
        }

        let sigma = self.sigma()?;
        let hb = self.cfg.harmonic;
        let v = estimate_v(&self.ens, &x, a, hb.horizon, hb.replicas, &self.seeder.child("v"))?;
        self.scalars.insert("harmonic_v".into(), Estimate { value: v.value, stderr: v.stderr, count: v.replicas });
        let norm = 2.0 / (sigma.0 * (2.0 * std::f64::consts::PI).sqrt());
        let predicted = norm * v.value;
        let rel_se = ((v.stderr / v.value).powi(2) + (sigma.1 / sigma.0).powi(2)).sqrt();
        self.scalars.insert(
            "predicted_level".into(),
            Estimate { value: predicted, stderr: predicted * rel_se, count: v.replicas },
        );
        let level = scaled.last().expect("validated").1.value;
        self.verdicts.push(Verdict::at_most(
            "level_relative_error",
            (level - predicted).abs() / predicted,
            self.th.level_tolerance,
        ));
        self.table("scaled_tau_tail", scaled);
        Ok(())
    }

    fn rayleigh_walk(&mut self) -> Result<()> {
        let x = self.x0()?;
        let n = self.horizon_max();
        let sample = conditioned_walk_samples(&self.ens, &x, self.cfg.a, n, self.cfg.replicas, &self.seeder)?;
        self.table("acceptance", [(n, Estimate::proportion(sample.accepted(), sample.attempted))]);
        self.verdicts.push(Verdict::at_least("accepted", sample.accepted() as f64, self.cfg.min_accepted as f64));
        let sigma = self.sigma()?;
        self.rayleigh_verdict("ks_rayleigh", &sample.values, self.th.ks_walk, sigma)
    }

    fn rayleigh_logpop(&mut self) -> Result<()> {
        let z = self.z()?;
        let h = &self.cfg.horizons;
        let samples = conditioned_snapshots(&self.ens, &z, h, self.cfg.replicas, &self.seeder, "rayleigh-logpop")?;
        let mut coupling = Vec::new();
        let mut survival = Vec::new();
        let mut last = None;
        for &n in h {
            survival.push((n, samples.survival(n).expect("simulated")));
            let lp = LogPopulationSample::from_snapshots(&samples, n)?;
            coupling.push((n, lp.coupling_exceedance(self.th.coupling_eps)));
            last = Some(lp);
        }
        let last = last.expect("validated");
        self.table("survival", survival);
        self.verdicts
            .push(Verdict::at_least("accepted", last.log_population.len() as f64, self.cfg.min_accepted as f64));
        if coupling.len() >= 2 {
            let first = coupling[0].1.value;
            let end = coupling[coupling.len() - 1].1.value;
            self.verdicts.push(Verdict::new("coupling_decrease", end - first, Relation::LessThan, 0.0));
        }
        self.table("coupling", coupling);
        let sigma = self.sigma()?;
        self.rayleigh_verdict("ks_log_population", &last.log_population, self.th.ks_logpop, sigma)?;
        self.rayleigh_verdict("ks_walk_given_survival", &last.walk, self.th.ks_logpop, sigma)
    }

    fn scaled_population(&mut self) -> Result<()> {
        let z = self.z()?;
        let j = self.cfg.type_index;
        if j >= self.ens.dim() {
            return Err(Error::Config(format!("type_index {j} out of range")));
        }
        let h = self.cfg.horizons.clone();
        let samples = conditioned_snapshots(&self.ens, &z, &h, self.cfg.replicas, &self.seeder, "scaled-population")?;
        let mut per_n = Vec::new();
        for &n in &h {
            per_n.push(ScaledPopulationSample::from_snapshots(&samples, n, j)?);
        }
        let mass: Vec<(usize, Estimate)> = per_n.iter().map(|s| (s.n, s.mass_below(self.th.mass_delta))).collect();
        let trend = self.cfg.trend_horizons.clone().unwrap_or_else(|| h.clone());
        let trend_values: Vec<f64> =
            trend.iter().map(|n| mass.iter().find(|m| m.0 == *n).expect("validated subset").1.value).collect();
        self.verdicts.push(Verdict::non_increasing("mass_below_non_increasing", &trend_values));
        let last = per_n.last().expect("validated");
        self.verdicts.push(Verdict::at_least("accepted", last.values.len() as f64, self.cfg.min_accepted as f64));
        if per_n.len() >= 2 {
            let prev = &per_n[per_n.len() - 2];
            let d = crate::stats::ks_two_sample(&prev.values, &last.values)?;
            self.verdicts.push(Verdict::at_most("ks_two_sample", d, self.th.ks_two_sample));
        }
        self.table("mass_below", mass);
        self.table("survival", h.iter().map(|&n| (n, samples.survival(n).expect("simulated"))));
        Ok(())
    }

    fn kesten_stigum(&mut self) -> Result<()> {
        let env_seed = self.cfg.env_seed.unwrap_or(self.seeder.root());
        let max = 2 * self.horizon_max();
        let env = sample_env_sequence(&self.ens, max + 1, &mut Seeder::new(env_seed).stream("ks-environment", 0));
        let rep = kesten_stigum_diagnostics(
            &self.ens,
            &env,
            env_seed,
            self.cfg.ancestor,
            &self.cfg.horizons,
            self.th.small_w,
            self.cfg.replicas,
            &self.seeder,
        )?;
        let p = self.ens.dim();
        for j in 0..p {
            self.table(format!("w_mean_j{j}"), rep.horizons.iter().map(|h| (h.n, h.w_mean[j])));
            let cauchy: Vec<(usize, Estimate)> = rep.horizons.iter().map(|h| (h.n, h.cauchy_l2[j])).collect();
            let values: Vec<f64> = cauchy.iter().map(|c| c.1.value).collect();
            self.verdicts.push(Verdict::decreasing(format!("cauchy_decreasing_j{j}"), &values));
            self.table(format!("cauchy_l2_j{j}"), cauchy);
            self.table(
                format!("variance_series_j{j}"),
                rep.variance_series[j].iter().enumerate().map(|(n, &v)| (n, Estimate::exact(v))),
            );
            self.table(
                format!("mean_series_j{j}"),
                rep.mean_series[j].iter().enumerate().map(|(n, &v)| (n, Estimate::exact(v))),
            );
        }
        self.table("extinction", rep.horizons.iter().map(|h| (h.n, h.extinct)));
        self.table("exact_extinction", rep.horizons.iter().map(|h| (h.n, Estimate::exact(h.exact_extinction))));
        let last = rep.horizons.last().expect("validated");
        self.table(
            "small_w_extinct",
            rep.horizons.iter().map(|h| (h.n, Estimate { value: h.coincidence, stderr: 0.0, count: h.small_w })),
        );
        self.verdicts.push(Verdict::at_least("coincidence", last.coincidence, self.th.coincidence));
        self.verdicts.push(Verdict::at_most(
            "extinction_oracle_sigmas",
            last.extinct.z_score(last.exact_extinction),
            self.th.oracle_sigmas,
        ));
        self.scalars.insert("env_seed".into(), Estimate::exact(env_seed as f64));
        Ok(())
    }

    fn series_check(&mut self) -> Result<()> {
        let x = self.x0()?;
        let a = self.cfg.a;
        let hb = self.cfg.harmonic;
        let n_max = 2 * self.horizon_max();
        let k_max = self.cfg.doob_steps.iter().copied().max().unwrap_or(0);
        let lattice = LatticeWalk::from_ensemble(&self.ens);
        let lattice_v = lattice.as_ref().map(|w| w.harmonic(a, hb.horizon, n_max.max(k_max) + 2));
        let mc_v;
        let v: &dyn Harmonic = match &lattice_v {
            Some(v) => v,
            None => {
                let bins = if self.ens.dim() == 2 { 4 } else { 1 };
                let top = a.max(0.0) + 4.0 * (n_max as f64).sqrt();
                let levels: Vec<f64> = (0..=16).map(|i| a.min(0.0) + top * i as f64 / 16.0).collect();
                mc_v = MonteCarloHarmonic::build(
                    &self.ens,
                    bins,
                    levels,
                    hb.horizon,
                    hb.replicas,
                    &self.seeder.child("v-table"),
                )?;
                &mc_v
            }
        };

        let mut weights = Vec::new();
        for &k in &self.cfg.doob_steps {
            let w = doob_expectation(
                &self.ens,
                &x,
                a,
                |_| 1.0,
                k,
                self.cfg.replicas,
                v,
                &self.seeder.child(&format!("weights-{k}")),
            )?;
            self.verdicts.push(Verdict::at_most(format!("doob_weight_k{k}"), w.z_score(1.0), self.th.weight_sigmas));
            weights.push((k, w));
        }
        self.table("doob_weight", weights);

        let mc = series_partial_sums(&self.ens, &x, a, n_max, self.cfg.replicas, v, &self.seeder)?;
        let exact = match (&lattice, &lattice_v) {
            (Some(w), Some(lv)) => {
                let etas: Vec<f64> = self.ens.atoms().iter().map(|at| at.moments.eta_g).collect();
                Some(w.doob_series(a, lv, &self.ens.weights(), &etas, n_max))
            }
            _ => None,
        };
        let h = self.cfg.horizons.clone();
        if h.contains(&0) {
            return Err(Error::Config("series horizons must be positive".into()));
        }
        self.table("series_term", h.iter().map(|&n| (n, mc[n].exp_term)));
        let increments: Vec<f64> = match &exact {
            Some(terms) => {
                let mut worst: f64 = 0.0;
                for &n in &h {
                    worst = worst.max(mc[n].exp_term.z_score(terms[n].0));
                }
                self.verdicts.push(Verdict::at_most("series_mc_vs_exact_sigmas", worst, self.th.oracle_sigmas));
                h.iter().map(|&n| terms[n..2 * n].iter().map(|t| t.0).sum()).collect()
            }
            None => h.iter().map(|&n| mc[2 * n - 1].exp_partial - mc[n - 1].exp_partial).collect(),
        };
        self.table("series_increment", h.iter().zip(&increments).map(|(&n, &v)| (n, Estimate::exact(v))));
        let ns: Vec<f64> = h.iter().map(|&n| n as f64).collect();
        let fit = fit_inverse_sqrt(&ns, &increments)?;
        self.verdicts.push(Verdict::at_most(
            "series_increment_residual",
            fit.max_relative_residual,
            self.th.series_fit_residual,
        ));
        let last = mc.last().expect("non-empty");
        self.scalars.insert(
            "exp_series_partial".into(),
            Estimate { value: last.exp_partial, stderr: f64::NAN, count: self.cfg.replicas },
        );
        self.scalars.insert(
            "eta_series_partial".into(),
            Estimate { value: last.eta_partial, stderr: f64::NAN, count: self.cfg.replicas },
        );
        Ok(())
    }

    fn local_limit(&mut self) -> Result<()> {
        let x = self.x0()?;
        let cells = self.cfg.cells.clone();
        let mut per_cell: Vec<Vec<(usize, Estimate)>> = vec![Vec::new(); cells.len()];
        for &n in &self.cfg.horizons {
            let rows = local_limit_cells(
                &self.ens,
                &x,
                self.cfg.a,
                &cells,
                n,
                self.cfg.replicas,
                &self.seeder.child(&format!("n{n}")),
            )?;
            for (slot, r) in per_cell.iter_mut().zip(rows) {
                slot.push((n, r.estimate));
            }
        }
        for (b, rows) in cells.iter().zip(per_cell) {
            let scaled: Vec<(usize, Estimate)> = rows
                .iter()
                .map(|&(n, e)| {
                    let f = (n as f64).powf(1.5);
                    (n, Estimate { value: f * e.value, stderr: f * e.stderr, count: e.count })
                })
                .collect();
            let values: Vec<f64> = scaled.iter().map(|s| s.1.value).collect();
            self.verdicts.push(Verdict::at_most(
                format!("local_limit_ratio_b{b}"),
                max_min_ratio(&values),
                self.th.local_limit_factor,
            ));
            self.table(format!("cell_b{b}"), rows);
            self.table(format!("scaled_cell_b{b}"), scaled);
        }
        Ok(())
    }
}

