use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::LyapunovBudget;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Validate,
    Lyapunov,
    Calibrate,
    Survival,
    TauTail,
    RayleighWalk,
    RayleighLogpop,
    ScaledPopulation,
    KestenStigum,
    SeriesCheck,
    LocalLimit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::Validate,
        ExperimentKind::Lyapunov,
        ExperimentKind::Calibrate,
        ExperimentKind::Survival,
        ExperimentKind::TauTail,
        ExperimentKind::RayleighWalk,
        ExperimentKind::RayleighLogpop,
        ExperimentKind::ScaledPopulation,
        ExperimentKind::KestenStigum,
        ExperimentKind::SeriesCheck,
        ExperimentKind::LocalLimit,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Validate => "validate",
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Survival => "survival",
            ExperimentKind::TauTail => "tau-tail",
            ExperimentKind::RayleighWalk => "rayleigh-walk",
            ExperimentKind::RayleighLogpop => "rayleigh-logpop",
            ExperimentKind::ScaledPopulation => "scaled-population",
            ExperimentKind::KestenStigum => "kesten-stigum",
            ExperimentKind::SeriesCheck => "series-check",
            ExperimentKind::LocalLimit => "local-limit",
        }
    }

    /// Kinds whose statements assume the full hypothesis set.
    pub fn needs_critical_gate(self) -> bool {
        matches!(
            self,
            ExperimentKind::Survival
                | ExperimentKind::TauTail
                | ExperimentKind::RayleighWalk
                | ExperimentKind::RayleighLogpop
                | ExperimentKind::ScaledPopulation
                | ExperimentKind::SeriesCheck
                | ExperimentKind::LocalLimit
        )
    }

    /// Kinds that need a horizon list.
    fn uses_horizons(self) -> bool {
        !matches!(self, ExperimentKind::Validate | ExperimentKind::Calibrate)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaBudget {
    pub horizon: usize,
    pub replicas: usize,
    pub burn_in: usize,
}

impl Default for SigmaBudget {
    fn default() -> Self {
        Self { horizon: 1024, replicas: 4000, burn_in: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicBudget {
    pub horizon: usize,
    pub replicas: usize,
}

impl Default for HarmonicBudget {
    fn default() -> Self {
        Self { horizon: 256, replicas: 100_000 }
    }
}

/// Verdict thresholds; all of them are echoed in the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub ks_walk: f64,
    pub ks_logpop: f64,
    pub ks_two_sample: f64,
    pub flatness: f64,
    pub level_tolerance: f64,
    pub fit_residual: f64,
    pub series_fit_residual: f64,
    pub local_limit_factor: f64,
    pub coincidence: f64,
    pub small_w: f64,
    pub mass_delta: f64,
    pub coupling_eps: f64,
    pub weight_sigmas: f64,
    pub oracle_sigmas: f64,
    pub calibration_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks_walk: 0.05,
            ks_logpop: 0.07,
            ks_two_sample: 0.05,
            flatness: 1.15,
            level_tolerance: 0.2,
            fit_residual: 0.1,
            series_fit_residual: 0.3,
            local_limit_factor: 3.0,
            coincidence: 0.95,
            small_w: 0.01,
            mass_delta: 0.01,
            coupling_eps: 0.25,
            weight_sigmas: 3.0,
            oracle_sigmas: 4.0,
            calibration_tol: 2e-3,
        }
    }
}

fn default_replicas() -> usize {
    10_000
}

fn default_delta() -> f64 {
    0.3
}

fn default_epsilon() -> f64 {
    0.02
}

fn default_k_bound() -> f64 {
    20.0
}

fn default_lyapunov() -> LyapunovBudget {
    LyapunovBudget { horizon: 512, replicas: 2000 }
}

fn default_cells() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

fn default_doob_steps() -> Vec<usize> {
    vec![1, 4, 16, 64]
}

fn default_min_accepted() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    /// Ensemble file, relative to the config file's directory.
    pub ensemble: PathBuf,
    /// Initial population; defaults to one individual of type 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<u64>>,
    /// Walk start; defaults to the barycenter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub horizons: Vec<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_replicas")]
    pub env_replicas: usize,
    #[serde(default = "default_min_accepted")]
    pub min_accepted: usize,
    #[serde(default)]
    pub sigma: SigmaBudget,
    #[serde(default = "default_lyapunov")]
    pub lyapunov: LyapunovBudget,
    #[serde(default)]
    pub harmonic: HarmonicBudget,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_k_bound")]
    pub k_bound: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Cell origins `b` for the local-limit experiment.
    #[serde(default = "default_cells")]
    pub cells: Vec<f64>,
    /// Steps `k` at which Doob weights are averaged.
    #[serde(default = "default_doob_steps")]
    pub doob_steps: Vec<usize>,
    /// Type `j` for the scaled-population experiment.
    #[serde(default)]
    pub type_index: usize,
    /// Ancestor type for the Kesten-Stigum experiment.
    #[serde(default)]
    pub ancestor: usize,
    /// Seed of the fixed environment sequence; defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
    /// Horizons for trend verdicts; defaults to `horizons`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend_horizons: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(Error::Config(format!("config is for '{k}', not '{kind}'")));
            }
        }
        let budgets = [
            ("replicas", self.replicas),
            ("env_replicas", self.env_replicas),
            ("min_accepted", self.min_accepted),
            ("sigma.horizon", self.sigma.horizon),
            ("sigma.replicas", self.sigma.replicas),
            ("lyapunov.horizon", self.lyapunov.horizon),
            ("lyapunov.replicas", self.lyapunov.replicas),
            ("harmonic.horizon", self.harmonic.horizon),
            ("harmonic.replicas", self.harmonic.replicas),
        ];
        for (name, v) in budgets {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let increasing = |h: &[usize]| !h.is_empty() && h.windows(2).all(|w| w[0] < w[1]);
        if kind.uses_horizons() && !increasing(&self.horizons) {
            return Err(Error::Config("horizons must be non-empty and strictly increasing".into()));
        }
        if let Some(t) = &self.trend_horizons {
            if !increasing(t) || t.iter().any(|h| !self.horizons.contains(h)) {
                return Err(Error::Config("trend_horizons must be an increasing subset of horizons".into()));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0 && self.k_bound > 0.0) {
            return Err(Error::Config("epsilon and k_bound must be positive".into()));
        }
        if !self.a.is_finite() {
            return Err(Error::Config("a must be finite".into()));
        }
        Ok(())
    }
}
