//! Shipped ensembles.

use crate::environment::{EnvironmentEnsemble, TiltKnob};
use crate::error::Result;
use crate::offspring::{OffspringLaw, OffspringRow, TruncatedGeometric, DEFAULT_CAP};

/// Row-stochastic base matrices of the shipped families.
pub const BASE_UP: [[f64; 2]; 2] = [[0.6, 0.4], [0.3, 0.7]];
pub const BASE_DOWN: [[f64; 2]; 2] = [[0.4, 0.6], [0.5, 0.5]];

/// Probability that a parent has no offspring at all, before the geometric draws.
pub const ZERO_PROB: f64 = 0.25;

/// Geometric mean parameter whose truncated law has mean `target`.
pub fn geometric_param_for_mean(target: f64, cap: u32) -> f64 {
    let mut m = target;
    for _ in 0..100 {
        let theta = m / (1.0 + m);
        let next = target / (1.0 - theta.powi(cap as i32));
        if (next - m).abs() <= f64::EPSILON * next {
            return next;
        }
        m = next;
    }
    m
}

/// A law whose parents have no offspring with probability `zero_prob` and
/// otherwise independent truncated-geometric counts; the realized mean
/// matrix is `mean`.
pub fn zero_inflated_law(mean: &[Vec<f64>], zero_prob: f64, cap: u32) -> Result<OffspringLaw> {
    let rows = mean
        .iter()
        .map(|row| {
            let params: Vec<f64> =
                row.iter().map(|&m| geometric_param_for_mean(m / (1.0 - zero_prob), cap)).collect();
            OffspringRow::zero_inflated(zero_prob, &params, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    OffspringLaw::new(rows)
}

fn scaled(base: &[[f64; 2]; 2], factor: f64) -> Vec<Vec<f64>> {
    base.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect()
}

/// Two equally likely atoms with mean matrices `c * BASE_UP` and `BASE_DOWN / c`.
///
/// Every row of the first has sum `c` and every row of the second has sum
/// `1 / c`, so the walk moves by exactly `+ln c` or `-ln c` from any state
/// and the family is critical for every `c`.
pub fn critical_branching_family(c: f64) -> Result<EnvironmentEnsemble> {
    weighted_family(c, 0.5)
}

/// The critical family viewed only through its mean matrices.
pub fn critical_lattice_walk(c: f64) -> Result<EnvironmentEnsemble> {
    critical_branching_family(c)
}

/// The same atoms with weight `up_weight` on the upward atom.
pub fn weighted_family(c: f64, up_weight: f64) -> Result<EnvironmentEnsemble> {
    EnvironmentEnsemble::new(vec![
        (up_weight, zero_inflated_law(&scaled(&BASE_UP, c), ZERO_PROB, DEFAULT_CAP)?),
        (1.0 - up_weight, zero_inflated_law(&scaled(&BASE_DOWN, 1.0 / c), ZERO_PROB, DEFAULT_CAP)?),
    ])?
    .with_tilt(TiltKnob::GeometricScale { value: 1.0, lower: 0.5, upper: 2.0 })
}

/// Two equally likely atoms with mean matrices `2 * BASE_UP` and `2 * BASE_DOWN`.
///
/// Every row sums to 2, so `|x M_{0,n}| = 2^n |x|` for every environment
/// sequence while the column profile stays random.
pub fn supercritical_family() -> Result<EnvironmentEnsemble> {
    EnvironmentEnsemble::new(vec![
        (0.5, zero_inflated_law(&scaled(&BASE_UP, 2.0), ZERO_PROB, DEFAULT_CAP)?),
        (0.5, zero_inflated_law(&scaled(&BASE_DOWN, 2.0), ZERO_PROB, DEFAULT_CAP)?),
    ])
}

/// Convenience for tests that need a bare truncated geometric.
pub fn geometric(mean: f64) -> Result<TruncatedGeometric> {
    TruncatedGeometric::new(geometric_param_for_mean(mean, DEFAULT_CAP), DEFAULT_CAP)
}
