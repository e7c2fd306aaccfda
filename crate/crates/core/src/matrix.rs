//! Non-negative matrices, the simplex of row vectors, projective actions and
//! overflow-safe products.
//!
//! Vectors in the simplex are row vectors: the right action is
//! `x . M = xM / |xM|` and the left action is `M . x = Mx / |Mx|`, both
//! normalized in the L1 norm. The contraction metric on the simplex is
//!
//! ```text
//! d(x, y) = (1 - m(x,y) m(y,x)) / (1 + m(x,y) m(y,x)),   m(x,y) = min { x_i / y_i : y_i > 0 }
//! ```
//!
//! which equals `tanh(h / 2)` for the Hilbert projective distance `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `p x p` matrix with finite non-negative entries, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosMatrix {
    p: usize,
    entries: Vec<f64>,
}

impl PosMatrix {
    pub fn new(p: usize, entries: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Construction("matrix dimension must be positive".into()));
        }
        if entries.len() != p * p {
            return Err(Error::Construction(format!(
                "expected {} entries for a {p}x{p} matrix, got {}",
                p * p,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Construction(format!("entry {bad} is not a finite non-negative number")));
        }
        Ok(Self { p, entries })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Construction("rows must all have length p".into()));
        }
        Self::new(p, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn identity(p: usize) -> Self {
        let mut entries = vec![0.0; p * p];
        for i in 0..p {
            entries[i * p + i] = 1.0;
        }
        Self { p, entries }
    }

    pub fn filled(p: usize, value: f64) -> Result<Self> {
        Self::new(p, vec![value; p * p])
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.p + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.p..(i + 1) * self.p]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.p, self.entries.iter().map(|v| v * factor).collect())
    }

    pub fn transpose(&self) -> Self {
        let p = self.p;
        let mut entries = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                entries[j * p + i] = self.entries[i * p + j];
            }
        }
        Self { p, entries }
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.p).map(|i| self.get(i, j)).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.p).map(|i| self.row_sum(i)).collect()
    }

    /// `|M|`, the sum of all entries.
    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.abs()).sum()
    }

    /// `v(M)`, the smallest column sum.
    pub fn min_col_sum(&self) -> f64 {
        (0..self.p).map(|j| self.col_sum(j)).fold(f64::INFINITY, f64::min)
    }

    /// `max(1 / v(M), |M|)`.
    pub fn cond_bound(&self) -> Result<f64> {
        let v = self.min_col_sum();
        if v <= 0.0 {
            return Err(Error::DegenerateMatrix("a column sums to zero".into()));
        }
        Ok((1.0 / v).max(self.l1_norm()))
    }

    /// True when every entry is positive and all entry ratios lie in `[1/B, B]`.
    pub fn in_class_b(&self, bound: f64) -> bool {
        let (min, max) = self.entry_range();
        min > 0.0 && max / min <= bound
    }

    /// Largest entry over smallest entry; infinite when an entry is zero.
    pub fn entry_ratio(&self) -> f64 {
        let (min, max) = self.entry_range();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    fn entry_range(&self) -> (f64, f64) {
        self.entries
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mul(&self, other: &PosMatrix) -> PosMatrix {
        assert_eq!(self.p, other.p, "dimension mismatch");
        let p = self.p;
        let mut entries = vec![0.0; p * p];
        for i in 0..p {
            for k in 0..p {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..p {
                    entries[i * p + j] += a * other.get(k, j);
                }
            }
        }
        PosMatrix { p, entries }
    }

    /// Row vector times matrix, written into `out`.
    #[inline]
    pub fn row_times_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.p;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.entries[i * p..(i + 1) * p];
            for (o, &m) in out.iter_mut().zip(row) {
                *o += xi * m;
            }
        }
    }

    pub fn row_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        self.row_times_into(x, &mut out);
        out
    }

    /// Matrix times column vector.
    pub fn times_col(&self, x: &[f64]) -> Vec<f64> {
        (0..self.p).map(|i| self.row(i).iter().zip(x).map(|(m, v)| m * v).sum()).collect()
    }

    /// True when all columns are proportional to one another.
    pub fn is_rank_one(&self, tol: f64) -> bool {
        let cols: Vec<Vec<f64>> = (0..self.p)
            .map(|j| {
                let s = self.col_sum(j);
                (0..self.p).map(|i| if s > 0.0 { self.get(i, j) / s } else { 0.0 }).collect()
            })
            .collect();
        cols.iter().all(|c| c.iter().zip(&cols[0]).all(|(a, b)| (a - b).abs() <= tol))
    }
}

/// A point of the simplex: a non-negative row vector with unit L1 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Builds a simplex point, renormalizing any input whose coordinates sum
    /// to at least `1e-12`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Construction("simplex point needs at least one coordinate".into()));
        }
        if coords.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Construction("simplex coordinates must be finite and non-negative".into()));
        }
        let total: f64 = coords.iter().sum();
        if !(total >= 1e-12) {
            return Err(Error::Construction(format!("coordinates sum to {total}, cannot normalize")));
        }
        Ok(Self::normalized(coords, total))
    }

    fn normalized(mut coords: Vec<f64>, total: f64) -> Self {
        coords.iter_mut().for_each(|v| *v /= total);
        Self { coords }
    }

    pub fn basis(p: usize, i: usize) -> Self {
        let mut coords = vec![0.0; p];
        coords[i] = 1.0;
        Self { coords }
    }

    pub fn barycenter(p: usize) -> Self {
        Self { coords: vec![1.0 / p as f64; p] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// The right projective action `x . M`.
pub fn act_right(x: &SimplexPoint, m: &PosMatrix) -> Result<SimplexPoint> {
    let y = m.row_times(x.coords());
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateMatrix("xM vanishes".into()));
    }
    Ok(SimplexPoint::normalized(y, total))
}

/// The left projective action `M . x`.
pub fn act_left(m: &PosMatrix, x: &SimplexPoint) -> Result<SimplexPoint> {
    let y = m.times_col(x.coords());
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateMatrix("Mx vanishes".into()));
    }
    Ok(SimplexPoint::normalized(y, total))
}

/// The cocycle `rho(x, M) = ln |xM|`.
pub fn rho(x: &SimplexPoint, m: &PosMatrix) -> Result<f64> {
    let total: f64 = m.row_times(x.coords()).iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateMatrix("xM vanishes".into()));
    }
    Ok(total.ln())
}

fn min_ratio(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .filter(|(_, &yi)| yi > 0.0)
        .map(|(&xi, &yi)| xi / yi)
        .fold(f64::INFINITY, f64::min)
}

/// Contraction distance on the simplex, with values in `[0, 1]`.
pub fn hennion_distance(x: &SimplexPoint, y: &SimplexPoint) -> f64 {
    distance_raw(x.coords(), y.coords())
}

fn distance_raw(x: &[f64], y: &[f64]) -> f64 {
    let prod = min_ratio(x, y) * min_ratio(y, x);
    ((1.0 - prod) / (1.0 + prod)).clamp(0.0, 1.0)
}

/// `[M]`: the diameter of the image `M . X` under the contraction distance.
///
/// The image of the simplex is the convex hull of the normalized columns,
/// and its diameter is attained on a pair of hull vertices.
pub fn contraction_coeff(m: &PosMatrix) -> Result<f64> {
    let p = m.dim();
    let mut cols = Vec::with_capacity(p);
    for j in 0..p {
        let s = m.col_sum(j);
        if s <= 0.0 {
            return Err(Error::DegenerateMatrix(format!("column {j} vanishes")));
        }
        cols.push((0..p).map(|i| m.get(i, j) / s).collect::<Vec<_>>());
    }
    let mut best: f64 = 0.0;
    for a in 0..p {
        for b in a + 1..p {
            best = best.max(distance_raw(&cols[a], &cols[b]));
        }
    }
    Ok(best)
}

/// A product `M_0 M_1 ... M_{n-1}` held as column-normalized matrix plus the
/// log of each column sum, so that no intermediate value over- or underflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedProduct {
    /// Column-normalized product; every column sums to one.
    pub bar_matrix: PosMatrix,
    /// `ln |M_{0,n}|`; zero for the empty product by convention.
    pub log_norm: f64,
    /// `ln |M_{0,n} e_j|` for each column `j`.
    pub log_col_sums: Vec<f64>,
    pub length: usize,
}

impl NormalizedProduct {
    /// `ln |x M_{0,n}|` for a row vector `x`.
    pub fn log_row_action(&self, x: &SimplexPoint) -> f64 {
        let p = self.bar_matrix.dim();
        let terms: Vec<f64> = (0..p)
            .map(|j| {
                let w: f64 = (0..p).map(|i| x.coords()[i] * self.bar_matrix.get(i, j)).sum();
                self.log_col_sums[j] + w.ln()
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Rebuilds the raw product; only sensible when it is representable.
    pub fn reconstruct(&self) -> PosMatrix {
        let p = self.bar_matrix.dim();
        let mut entries = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                entries[i * p + j] = self.bar_matrix.get(i, j) * self.log_col_sums[j].exp();
            }
        }
        PosMatrix { p, entries }
    }
}

/// Incremental, overflow-safe accumulator for right products.
#[derive(Debug, Clone)]
pub struct ProductChain {
    p: usize,
    bar: Vec<f64>,
    log_col: Vec<f64>,
    scratch: Vec<f64>,
    weights: Vec<f64>,
    length: usize,
}

impl ProductChain {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            bar: PosMatrix::identity(p).entries,
            log_col: vec![0.0; p],
            scratch: vec![0.0; p * p],
            weights: vec![0.0; p],
            length: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Multiplies the running product on the right by `m`.
    pub fn push(&mut self, m: &PosMatrix) -> Result<()> {
        let p = self.p;
        debug_assert_eq!(m.dim(), p);
        let shift = self.log_col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (w, &l) in self.weights.iter_mut().zip(&self.log_col) {
            *w = (l - shift).exp();
        }
        // column j of the new product: sum_k bar(:,k) w_k M(k,j)
        self.scratch.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..p {
            let wk = self.weights[k];
            if wk == 0.0 {
                continue;
            }
            for j in 0..p {
                let c = wk * m.get(k, j);
                if c == 0.0 {
                    continue;
                }
                for i in 0..p {
                    self.scratch[i * p + j] += self.bar[i * p + k] * c;
                }
            }
        }
        for j in 0..p {
            let s: f64 = (0..p).map(|i| self.scratch[i * p + j]).sum();
            if !(s > 0.0) {
                return Err(Error::DegenerateMatrix(format!(
                    "column {j} of the product vanishes after {} factors",
                    self.length + 1
                )));
            }
            for i in 0..p {
                self.bar[i * p + j] = self.scratch[i * p + j] / s;
            }
            self.log_col[j] = shift + s.ln();
        }
        self.length += 1;
        Ok(())
    }

    /// `ln |M_{0,n} e_j|`.
    pub fn log_col_sum(&self, j: usize) -> f64 {
        self.log_col[j]
    }

    pub fn log_norm(&self) -> f64 {
        if self.length == 0 {
            0.0
        } else {
            log_sum_exp(&self.log_col)
        }
    }

    pub fn snapshot(&self) -> NormalizedProduct {
        NormalizedProduct {
            bar_matrix: PosMatrix { p: self.p, entries: self.bar.clone() },
            log_norm: self.log_norm(),
            log_col_sums: self.log_col.clone(),
            length: self.length,
        }
    }
}

/// Normalized product of a finite chain; the empty chain gives the identity.
pub fn product_chain(ms: &[PosMatrix]) -> Result<NormalizedProduct> {
    let p = match ms.first() {
        Some(m) => m.dim(),
        None => return Err(Error::Domain("empty chain has no dimension; use product_chain_dim".into())),
    };
    product_chain_dim(p, ms)
}

/// Like [`product_chain`] with an explicit dimension, so empty chains are allowed.
pub fn product_chain_dim(p: usize, ms: &[PosMatrix]) -> Result<NormalizedProduct> {
    let mut chain = ProductChain::new(p);
    for m in ms {
        if m.dim() != p {
            return Err(Error::Construction("matrices in a chain must share a dimension".into()));
        }
        chain.push(m)?;
    }
    Ok(chain.snapshot())
}

/// Current estimate of the rank-one limit direction: the first normalized column.
pub fn rank_one_direction(np: &NormalizedProduct) -> SimplexPoint {
    let p = np.bar_matrix.dim();
    let col: Vec<f64> = (0..p).map(|i| np.bar_matrix.get(i, 0)).collect();
    let total: f64 = col.iter().sum();
    SimplexPoint::normalized(col, total)
}

/// Largest contraction distance between normalized columns of the product.
pub fn column_spread(np: &NormalizedProduct) -> f64 {
    let p = np.bar_matrix.dim();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| (0..p).map(|i| np.bar_matrix.get(i, j)).collect()).collect();
    let mut best: f64 = 0.0;
    for a in 0..p {
        for b in a + 1..p {
            best = best.max(distance_raw(&cols[a], &cols[b]));
        }
    }
    best
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> PosMatrix {
        PosMatrix::from_rows(rows).unwrap()
    }

    fn sp(c: &[f64]) -> SimplexPoint {
        SimplexPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn norms_and_column_sums() {
        assert_eq!(PosMatrix::identity(2).l1_norm(), 2.0);
        assert_eq!(PosMatrix::filled(2, 1.0).unwrap().l1_norm(), 4.0);
        assert_eq!(PosMatrix::filled(3, 0.0).unwrap().l1_norm(), 0.0);

        assert_eq!(m(&[&[1.0, 2.0], &[3.0, 4.0]]).min_col_sum(), 4.0);
        assert_eq!(PosMatrix::identity(3).min_col_sum(), 1.0);
        assert_eq!(m(&[&[1.0, 0.0], &[3.0, 0.0]]).min_col_sum(), 0.0);
    }

    #[test]
    fn cond_bound_cases() {
        assert_eq!(PosMatrix::identity(2).cond_bound().unwrap(), 2.0);
        assert_eq!(m(&[&[1.0, 2.0], &[3.0, 4.0]]).cond_bound().unwrap(), 10.0);
        let small = PosMatrix::identity(2).scaled(0.1).unwrap();
        assert!((small.cond_bound().unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(
            m(&[&[1.0, 0.0], &[3.0, 0.0]]).cond_bound(),
            Err(Error::DegenerateMatrix(_))
        ));
    }

    #[test]
    fn class_b_membership() {
        assert!(PosMatrix::filled(3, 2.5).unwrap().in_class_b(1.0));
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert!(a.in_class_b(4.0));
        assert!(!a.in_class_b(3.9));
        assert!(!m(&[&[1.0, 0.0], &[3.0, 4.0]]).in_class_b(100.0));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(PosMatrix::new(2, vec![1.0, -1.0, 0.0, 1.0]).is_err());
        assert!(PosMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(PosMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(SimplexPoint::new(vec![0.0, 0.0]).is_err());
        assert!(SimplexPoint::new(vec![1e-13, 0.0]).is_err());
        let x = SimplexPoint::new(vec![2.0, 6.0]).unwrap();
        assert_eq!(x.coords(), &[0.25, 0.75]);
    }

    #[test]
    fn projective_actions() {
        let e1 = SimplexPoint::basis(2, 0);
        let y = act_right(&e1, &PosMatrix::filled(2, 1.0).unwrap()).unwrap();
        assert_eq!(y.coords(), &[0.5, 0.5]);
        let x = sp(&[0.3, 0.7]);
        assert_eq!(act_right(&x, &PosMatrix::identity(2)).unwrap(), x);
        let y = act_right(&e1, &m(&[&[1.0, 3.0], &[5.0, 7.0]])).unwrap();
        assert_eq!(y.coords(), &[0.25, 0.75]);
        assert!(act_right(&e1, &m(&[&[0.0, 0.0], &[5.0, 7.0]])).is_err());
    }

    #[test]
    fn cocycle_values() {
        let half = SimplexPoint::barycenter(2);
        let two_i = PosMatrix::identity(2).scaled(2.0).unwrap();
        assert!((rho(&half, &two_i).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(rho(&sp(&[0.2, 0.8]), &PosMatrix::identity(2)).unwrap(), 0.0);
        let e1 = SimplexPoint::basis(2, 0);
        assert!((rho(&e1, &m(&[&[1.0, 3.0], &[5.0, 7.0]])).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distance_values() {
        let x = sp(&[0.3, 0.7]);
        assert_eq!(hennion_distance(&x, &x), 0.0);
        assert_eq!(hennion_distance(&SimplexPoint::basis(2, 0), &SimplexPoint::basis(2, 1)), 1.0);
        let d = hennion_distance(&sp(&[0.5, 0.5]), &sp(&[0.25, 0.75]));
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn contraction_cases() {
        let rank_one = m(&[&[1.0, 2.0], &[3.0, 6.0]]);
        assert_eq!(contraction_coeff(&rank_one).unwrap(), 0.0);
        assert_eq!(contraction_coeff(&PosMatrix::identity(2)).unwrap(), 1.0);
        assert_eq!(contraction_coeff(&PosMatrix::filled(2, 1.0).unwrap()).unwrap(), 0.0);
        assert!(contraction_coeff(&m(&[&[1.0, 0.0], &[1.0, 0.0]])).is_err());
    }

    #[test]
    fn chain_conventions() {
        let empty = product_chain_dim(2, &[]).unwrap();
        assert_eq!(empty.bar_matrix, PosMatrix::identity(2));
        assert_eq!(empty.log_norm, 0.0);
        assert_eq!(empty.length, 0);
        assert_eq!(rank_one_direction(&empty), SimplexPoint::basis(2, 0));

        let one = product_chain(&[m(&[&[1.0, 2.0], &[3.0, 4.0]])]).unwrap();
        assert!((one.log_norm - 10f64.ln()).abs() < 1e-14);
        assert!((one.log_col_sums[0] - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rank_one_fixed_point_after_one_step() {
        let r = m(&[&[1.0, 2.0], &[3.0, 6.0]]);
        let np = product_chain(&[r.clone(), r.clone(), r]).unwrap();
        let dir = rank_one_direction(&np);
        assert!((dir.coords()[0] - 0.25).abs() < 1e-15);
        assert!(column_spread(&np) < 1e-15);
    }

    #[test]
    fn long_critical_chain_stays_finite() {
        // alternating scale 1e6 and 1e-6 never overflows in log form
        let up = PosMatrix::filled(2, 5e5).unwrap();
        let down = PosMatrix::filled(2, 5e-7).unwrap();
        let mut chain = ProductChain::new(2);
        for k in 0..200_000 {
            chain.push(if k % 3 == 0 { &up } else { &down }).unwrap();
        }
        assert!(chain.log_norm().is_finite());
    }

    fn arb_matrix(p: usize) -> impl Strategy<Value = PosMatrix> {
        prop::collection::vec(0.1f64..10.0, p * p).prop_map(move |e| PosMatrix::new(p, e).unwrap())
    }

    fn arb_point(p: usize) -> impl Strategy<Value = SimplexPoint> {
        prop::collection::vec(0.0f64..1.0, p)
            .prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-6)
            .prop_map(|v| SimplexPoint::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn simplex_points_sum_to_one(x in (2usize..6).prop_flat_map(arb_point)) {
            prop_assert!((x.coords().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cocycle_identity(
            (x, a, b) in (2usize..5).prop_flat_map(|p| (arb_point(p), arb_matrix(p), arb_matrix(p)))
        ) {
            let lhs = rho(&x, &a.mul(&b)).unwrap();
            let rhs = rho(&act_right(&x, &a).unwrap(), &b).unwrap() + rho(&x, &a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }

        #[test]
        fn chain_matches_direct_product(ms in (2usize..5).prop_flat_map(|p| prop::collection::vec(arb_matrix(p), 1..20))) {
            let direct = ms[1..].iter().fold(ms[0].clone(), |acc, m| acc.mul(m));
            let np = product_chain(&ms).unwrap();
            let rel = (np.log_norm.exp() - direct.l1_norm()).abs() / direct.l1_norm();
            prop_assert!(rel <= 1e-8);
            let rebuilt = np.reconstruct();
            for (u, v) in rebuilt.entries().iter().zip(direct.entries()) {
                prop_assert!((u - v).abs() <= 1e-8 * v.abs());
            }
            for j in 0..np.bar_matrix.dim() {
                prop_assert!((np.bar_matrix.col_sum(j) - 1.0).abs() <= 1e-10);
            }
        }
    }
}
