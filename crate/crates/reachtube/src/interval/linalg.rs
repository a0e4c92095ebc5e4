//! Interval vectors and matrices, rigorous spectral-norm bounds, and Lohner
//! QR reconditioning.

use super::Interval;
use crate::error::{ReachError, Result};
use nalgebra::{DMatrix, DVector};

/// A vector of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    components: Vec<Interval>,
}

impl IVector {
    pub fn new(components: Vec<Interval>) -> Result<Self> {
        if components.is_empty() {
            return Err(ReachError::InvalidInput("empty interval vector".into()));
        }
        Ok(Self { components })
    }

    /// Zero-width vector at `x`.
    pub fn from_point(x: &DVector<f64>) -> Self {
        Self {
            components: x.iter().map(|&v| Interval::point(v)).collect(),
        }
    }

    /// Box `center ± rad` (componentwise).
    pub fn centered(center: &DVector<f64>, rad: f64) -> Result<Self> {
        let components = center
            .iter()
            .map(|&c| Interval::centered(c, rad))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn get(&self, i: usize) -> Interval {
        self.components[i]
    }

    pub fn set(&mut self, i: usize, v: Interval) {
        self.components[i] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> {
        self.components.iter()
    }

    pub fn mid(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|i| i.mid()))
    }

    pub fn rad(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|i| i.rad()))
    }

    pub fn max_width(&self) -> f64 {
        self.components
            .iter()
            .map(|i| i.width())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|i| i.is_finite())
    }

    pub fn contains_point(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.components).all(|(&v, i)| i.contains(v))
    }

    pub fn contains(&self, other: &IVector) -> bool {
        other.dim() == self.dim()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|(a, b)| a.contains_interval(b))
    }

    pub fn sub(&self, other: &IVector) -> IVector {
        debug_assert_eq!(self.dim(), other.dim());
        IVector {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn add(&self, other: &IVector) -> IVector {
        debug_assert_eq!(self.dim(), other.dim());
        IVector {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn scale(&self, c: &Interval) -> IVector {
        IVector {
            components: self.components.iter().map(|a| a.mul(c)).collect(),
        }
    }

    pub fn hull(&self, other: &IVector) -> IVector {
        debug_assert_eq!(self.dim(), other.dim());
        IVector {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.hull(b))
                .collect(),
        }
    }

    pub fn inflate(&self, rel: f64, abs: f64) -> IVector {
        IVector {
            components: self.components.iter().map(|i| i.inflate(rel, abs)).collect(),
        }
    }
}

/// A row-major matrix of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IMatrix {
    entries: Vec<Interval>,
    rows: usize,
    cols: usize,
}

impl IMatrix {
    pub fn new(entries: Vec<Interval>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(ReachError::DimensionMismatch(format!(
                "matrix {}x{} with {} entries",
                rows,
                cols,
                entries.len()
            )));
        }
        Ok(Self {
            entries,
            rows,
            cols,
        })
    }

    /// Zero-width matrix equal to `m`.
    pub fn from_real(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                entries.push(Interval::point(m[(i, j)]));
            }
        }
        Self {
            entries,
            rows: m.nrows(),
            cols: m.ncols(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![Interval::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = Interval::point(1.0);
        }
        Self {
            entries,
            rows: n,
            cols: n,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Interval) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn mid(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).mid())
    }

    pub fn rad(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).rad())
    }

    /// Entrywise magnitude matrix `max(|lo|, |hi|)`.
    pub fn mag(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).mag())
    }

    pub fn max_width(&self) -> f64 {
        self.entries.iter().map(|i| i.width()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|i| i.is_finite())
    }

    pub fn contains_real(&self, m: &DMatrix<f64>) -> bool {
        m.nrows() == self.rows
            && m.ncols() == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j).contains(m[(i, j)])))
    }

    pub fn contains(&self, other: &IMatrix) -> bool {
        other.rows == self.rows
            && other.cols == self.cols
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.contains_interval(b))
    }

    pub fn add(&self, other: &IMatrix) -> IMatrix {
        debug_assert!(self.rows == other.rows && self.cols == other.cols);
        IMatrix {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn scale(&self, c: &Interval) -> IMatrix {
        IMatrix {
            entries: self.entries.iter().map(|a| a.mul(c)).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn inflate(&self, rel: f64, abs: f64) -> IMatrix {
        IMatrix {
            entries: self.entries.iter().map(|i| i.inflate(rel, abs)).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Interval matrix product. Entrywise containment via interval dot
    /// products; this overestimates the true matrix-set product (the same
    /// member matrix may be treated as different members per entry).
    pub fn mul(&self, other: &IMatrix) -> Result<IMatrix> {
        if self.cols != other.rows {
            return Err(ReachError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Interval::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self.get(i, k).mul(&other.get(k, j)));
                }
                entries.push(acc);
            }
        }
        IMatrix::new(entries, self.rows, other.cols)
    }

    /// Interval matrix applied to an interval vector.
    pub fn mul_vec(&self, v: &IVector) -> Result<IVector> {
        if self.cols != v.dim() {
            return Err(ReachError::DimensionMismatch(format!(
                "{}x{} * vec {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let mut components = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut acc = Interval::zero();
            for k in 0..self.cols {
                acc = acc.add(&self.get(i, k).mul(&v.get(k)));
            }
            components.push(acc);
        }
        IVector::new(components)
    }

    /// Left-multiply by a zero-width real matrix.
    pub fn mul_real_left(&self, m: &DMatrix<f64>) -> Result<IMatrix> {
        IMatrix::from_real(m).mul(self)
    }

    /// Right-multiply by a zero-width real matrix.
    pub fn mul_real_right(&self, m: &DMatrix<f64>) -> Result<IMatrix> {
        self.mul(&IMatrix::from_real(m))
    }
}

/// Column-sum norm of a nonnegative matrix.
fn norm_one(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Row-sum norm of a nonnegative matrix.
fn norm_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value, inflated by a small relative slop to cover the
/// nearest-rounding error of the dense SVD.
fn sigma_max_inflated(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.clone().singular_values();
    let s = sv.iter().cloned().fold(0.0, f64::max);
    s * (1.0 + 1e-12) + 1e-300
}

/// Rigorous upper bound on `sup { sigma_max(G) : G in [F] }` for an interval
/// matrix, as the tighter of two closed-form candidates:
///
/// (a) `sigma_max(mid) + ||rad||` with the radius term bounded by
///     `sqrt(||rad||_1 * ||rad||_inf)`, and
/// (b) `sqrt(|| |F| ||_1 * || |F| ||_inf)` on the entrywise magnitude matrix.
pub fn imatrix_sigma_max_bound(f: &IMatrix) -> f64 {
    let mid = f.mid();
    let rad = f.rad();
    let rump = sigma_max_inflated(&mid) + (norm_one(&rad) * norm_inf(&rad)).sqrt();
    let mag = f.mag();
    let holder = (norm_one(&mag) * norm_inf(&mag)).sqrt();
    rump.min(holder)
}

/// Rigorous upper bound on the weighted spectral norm
/// `sup { sigma_max(A_range * G * A_domain_inv) : G in [F] }`.
///
/// The weighting matrices enter as zero-width interval factors, so rounding in
/// the triple product is accounted for.
pub fn weighted_sigma_max_bound(
    f: &IMatrix,
    a_range: &DMatrix<f64>,
    a_domain_inv: &DMatrix<f64>,
) -> Result<f64> {
    if f.rows() != f.cols() {
        return Err(ReachError::DimensionMismatch(format!(
            "spectral norm bound needs a square matrix, got {}x{}",
            f.rows(),
            f.cols()
        )));
    }
    let w = f.mul_real_left(a_range)?.mul_real_right(a_domain_inv)?;
    Ok(imatrix_sigma_max_bound(&w))
}

/// Interval enclosure of the exact real inverse of a numerically orthogonal
/// matrix `q`.
///
/// With `R = I - q^T q` (enclosed in interval arithmetic) and
/// `rho = ||R||_inf < 1`, the inverse satisfies
/// `q^{-1} = (I - R)^{-1} q^T = q^T + D q^T` with `||D||_inf <= rho/(1-rho)`,
/// so every entry of `q^{-1}` lies within `rho/(1-rho) * max|q|` of `q^T`.
pub fn enclose_inverse_near_orthogonal(q: &DMatrix<f64>) -> Result<IMatrix> {
    let n = q.nrows();
    if n != q.ncols() {
        return Err(ReachError::DimensionMismatch("inverse of non-square".into()));
    }
    let qi = IMatrix::from_real(q);
    let qtq = IMatrix::from_real(&q.transpose()).mul(&qi)?;
    let mut residual_mag = 0.0f64;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let e = qtq.get(i, j);
            row += (e.lo() - target).abs().max((e.hi() - target).abs());
        }
        residual_mag = residual_mag.max(row);
    }
    let rho = residual_mag * (1.0 + 1e-12) + 1e-300;
    if rho >= 0.5 {
        return Err(ReachError::Singular(
            "matrix is too far from orthogonal to enclose its inverse".into(),
        ));
    }
    let max_abs = q.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let slack = rho / (1.0 - rho) * max_abs * (1.0 + 1e-12);
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            entries.push(Interval::centered(q[(j, i)], slack)?);
        }
    }
    IMatrix::new(entries, n, n)
}

/// Extract the rotational part of an interval matrix via QR of its midpoint.
///
/// Returns `(Q, F_new)` with `Q` orthogonal and `F_new = [Q^{-1}] * [F]`, so
/// that every member `G` of `[F]` equals `Q * G'` for some member `G'` of
/// `F_new`; in particular `Q * F_new` contains `[F]` entrywise. A
/// rank-deficient midpoint falls back to `Q = I`.
pub fn lohner_qr_recondition(f: &IMatrix) -> Result<(DMatrix<f64>, IMatrix)> {
    if f.rows() != f.cols() {
        return Err(ReachError::DimensionMismatch(format!(
            "QR reconditioning needs a square matrix, got {}x{}",
            f.rows(),
            f.cols()
        )));
    }
    let n = f.rows();
    let mid = f.mid();
    let mut q = if mid.iter().all(|v| v.is_finite()) {
        let qr = mid.clone().qr();
        let mut q = qr.q();
        let r = qr.r();
        // Sign-normalize: make the diagonal of R nonnegative so that a
        // diagonal midpoint yields Q = I.
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        q
    } else {
        DMatrix::identity(n, n)
    };
    // Rank-deficient or badly conditioned midpoint: Q from QR may not be
    // orthogonal enough; fall back to the identity frame.
    let ortho_defect = (&q.transpose() * &q - DMatrix::identity(n, n))
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if !ortho_defect.is_finite() || ortho_defect > 1e-12 {
        q = DMatrix::identity(n, n);
    }

    let qinv = enclose_inverse_near_orthogonal(&q)?;
    let f_new = qinv.mul(f)?;
    Ok((q, f_new))
}
