//! On-disk ensemble format. Every real number is a decimal string.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvironmentEnsemble, TiltKnob};
use crate::error::{Error, Result};
use crate::offspring::{OffspringLaw, OffspringRow, DEFAULT_CAP};

/// A real number written as a decimal string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decimal(pub String);

impl Decimal {
    /// Shortest string that parses back to `v`.
    pub fn from_f64(v: f64) -> Self {
        Decimal(format!("{v}"))
    }

    pub fn parse(&self, field: &str) -> Result<f64> {
        let v: f64 = self.0.trim().parse().map_err(|_| Error::Config(format!("{field}: '{}' is not a decimal", self.0)))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("{field}: '{}' is not finite", self.0)));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub p: usize,
    pub atoms: Vec<AtomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: Decimal,
    pub rows: Vec<RowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RowSpec {
    Table { atoms: Vec<TableAtom> },
    ZeroInflatedGeometric { params: GeometricParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableAtom {
    pub counts: Vec<u32>,
    pub prob: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricParams {
    pub zero_prob: Decimal,
    /// Untruncated mean parameter per child type.
    pub means: Vec<Decimal>,
    #[serde(default = "default_cap")]
    pub cap: u32,
}

fn default_cap() -> u32 {
    DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TiltSpec {
    GeometricScale { value: Decimal, lower: Decimal, upper: Decimal },
    WeightPair { first: usize, second: usize, value: Decimal, lower: Decimal, upper: Decimal },
}

impl TiltSpec {
    fn to_knob(&self) -> Result<TiltKnob> {
        Ok(match self {
            TiltSpec::GeometricScale { value, lower, upper } => TiltKnob::GeometricScale {
                value: value.parse("tilt.value")?,
                lower: lower.parse("tilt.lower")?,
                upper: upper.parse("tilt.upper")?,
            },
            TiltSpec::WeightPair { first, second, value, lower, upper } => TiltKnob::WeightPair {
                first: *first,
                second: *second,
                value: value.parse("tilt.value")?,
                lower: lower.parse("tilt.lower")?,
                upper: upper.parse("tilt.upper")?,
            },
        })
    }

    fn from_knob(k: &TiltKnob) -> Self {
        let d = Decimal::from_f64;
        match *k {
            TiltKnob::GeometricScale { value, lower, upper } => {
                TiltSpec::GeometricScale { value: d(value), lower: d(lower), upper: d(upper) }
            }
            TiltKnob::WeightPair { first, second, value, lower, upper } => {
                TiltSpec::WeightPair { first, second, value: d(value), lower: d(lower), upper: d(upper) }
            }
        }
    }
}

impl EnsembleFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read ensemble file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ensemble file serializes");
        s.push('\n');
        s
    }

    pub fn to_ensemble(&self) -> Result<EnvironmentEnsemble> {
        let p = self.p;
        if p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (ai, atom) in self.atoms.iter().enumerate() {
            if atom.rows.len() != p {
                return Err(Error::Config(format!("atom {ai} has {} rows, expected {p}", atom.rows.len())));
            }
            let rows = atom
                .rows
                .iter()
                .enumerate()
                .map(|(ri, row)| row_from_spec(row, p, &format!("atoms[{ai}].rows[{ri}]")))
                .collect::<Result<Vec<_>>>()?;
            atoms.push((atom.weight.parse(&format!("atoms[{ai}].weight"))?, OffspringLaw::new(rows)?));
        }
        let ens = EnvironmentEnsemble::new(atoms)?;
        match &self.tilt {
            Some(t) => ens.with_tilt(t.to_knob()?),
            None => Ok(ens),
        }
    }

    pub fn from_ensemble(ens: &EnvironmentEnsemble) -> Result<Self> {
        let atoms = ens
            .atoms()
            .iter()
            .map(|a| {
                Ok(AtomSpec {
                    weight: Decimal::from_f64(a.weight),
                    rows: a.law.rows().iter().map(row_to_spec).collect::<Result<Vec<_>>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { p: ens.dim(), atoms, tilt: ens.tilt().map(TiltSpec::from_knob) })
    }
}

fn row_from_spec(row: &RowSpec, p: usize, at: &str) -> Result<OffspringRow> {
    match row {
        RowSpec::Table { atoms } => {
            let parsed = atoms
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    if a.counts.len() != p {
                        return Err(Error::Config(format!("{at}.atoms[{k}]: counts must have length {p}")));
                    }
                    Ok((a.counts.clone(), a.prob.parse(&format!("{at}.atoms[{k}].prob"))?))
                })
                .collect::<Result<Vec<_>>>()?;
            OffspringRow::table(p, parsed)
        }
        RowSpec::ZeroInflatedGeometric { params } => {
            if params.means.len() != p {
                return Err(Error::Config(format!("{at}: means must have length {p}")));
            }
            let means = params
                .means
                .iter()
                .enumerate()
                .map(|(k, m)| m.parse(&format!("{at}.means[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            OffspringRow::zero_inflated(params.zero_prob.parse(&format!("{at}.zero_prob"))?, &means, params.cap)
        }
    }
}

fn row_to_spec(row: &OffspringRow) -> Result<RowSpec> {
    Ok(match row {
        OffspringRow::Table { atoms } => RowSpec::Table {
            atoms: atoms.iter().map(|(c, q)| TableAtom { counts: c.clone(), prob: Decimal::from_f64(*q) }).collect(),
        },
        OffspringRow::ZeroInflatedGeometric { zero_prob, children } => {
            let cap = children.first().map_or(DEFAULT_CAP, |g| g.cap);
            if children.iter().any(|g| g.cap != cap) {
                return Err(Error::Config("per-child caps differ; the file format stores one cap per row".into()));
            }
            RowSpec::ZeroInflatedGeometric {
                params: GeometricParams {
                    zero_prob: Decimal::from_f64(*zero_prob),
                    means: children.iter().map(|g| Decimal::from_f64(g.mean_param)).collect(),
                    cap,
                },
            }
        }
    })
}
