//! Metrics, ellipsoids, and the sphere geometry used by both engines.
//!
//! A metric is a symmetric positive-definite `M` kept together with a factor
//! `A` (so `AᵀA = M`) and its inverse: the weighted norm is then
//! `‖x‖_M = ‖A x‖₂` and never needs `M` itself. The deterministic engine
//! picks the metric that minimizes the bounding ellipsoid's volume around the
//! propagated center gradient; the statistical engine needs uniform samples
//! on sphere surfaces and the surface fraction covered by a spherical cap.

use crate::error::{ReachError, Result};
use crate::interval::{weighted_sigma_max_bound, IMatrix, IVector};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::beta_reg;

/// Weighted norm `‖x‖_M = √(xᵀMx)` carried in factored form.
#[derive(Debug, Clone)]
pub struct Metric {
    m: DMatrix<f64>,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

impl Metric {
    /// Euclidean metric in dimension `n`.
    pub fn euclidean(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
            a: DMatrix::identity(n, n),
            a_inv: DMatrix::identity(n, n),
        }
    }

    /// Build from a symmetric positive-definite `M` via Cholesky (`A = Lᵀ`).
    pub fn from_m(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ReachError::DimensionMismatch(format!(
                "metric must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or(ReachError::NotPositiveDefinite)?;
        let a = chol.l().transpose();
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or(ReachError::NotPositiveDefinite)?;
        Ok(Self { m: sym, a, a_inv })
    }

    /// Build from a full-rank factor `A`, with `M = AᵀA`.
    pub fn from_a(a: DMatrix<f64>) -> Result<Self> {
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| ReachError::Singular("metric factor is not invertible".into()))?;
        let m = a.transpose() * &a;
        Ok(Self { m, a, a_inv })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// `M⁻¹ = A⁻¹ A⁻ᵀ`.
    pub fn m_inv(&self) -> DMatrix<f64> {
        &self.a_inv * self.a_inv.transpose()
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x).norm()
    }

    pub fn det_m(&self) -> f64 {
        // det M = (det A)², stable through the factor.
        let d = self.a.determinant();
        d * d
    }
}

/// Ball `{x : ‖x − c‖_M ≤ δ}` in a weighted metric.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub metric: Metric,
    pub radius: f64,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, metric: Metric, radius: f64) -> Result<Self> {
        if radius < 0.0 || !radius.is_finite() {
            return Err(ReachError::InvalidInput(format!(
                "ellipsoid radius must be finite and nonnegative, got {radius}"
            )));
        }
        if center.len() != metric.dim() {
            return Err(ReachError::DimensionMismatch(format!(
                "center dim {} vs metric dim {}",
                center.len(),
                metric.dim()
            )));
        }
        Ok(Self {
            center,
            metric,
            radius,
        })
    }

    pub fn euclidean_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        Self::new(center, Metric::euclidean(n), radius)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.metric.norm(&(x - &self.center)) <= self.radius + 1e-12
    }

    /// Axis-aligned bounding box: half-width in coordinate `i` is
    /// `δ·√((M⁻¹)_{ii})`.
    pub fn bounding_box(&self) -> Result<BoxSet> {
        let m_inv = self.metric.m_inv();
        let mut comps = Vec::with_capacity(self.center.len());
        for i in 0..self.center.len() {
            let hw = self.radius * m_inv[(i, i)].max(0.0).sqrt() * (1.0 + 1e-12);
            comps.push(crate::interval::Interval::centered(self.center[i], hw)?);
        }
        Ok(BoxSet {
            intervals: IVector::new(comps)?,
        })
    }

    pub fn volume(&self) -> f64 {
        ellipsoid_volume(self)
    }
}

/// Axis-aligned box of interval components.
#[derive(Debug, Clone)]
pub struct BoxSet {
    pub intervals: IVector,
}

impl BoxSet {
    pub fn new(intervals: IVector) -> Self {
        Self { intervals }
    }

    pub fn dim(&self) -> usize {
        self.intervals.dim()
    }

    pub fn contains_point(&self, x: &DVector<f64>) -> bool {
        self.intervals.contains_point(x)
    }

    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.width()).product()
    }

    /// Componentwise intersection; errors if any component pair is disjoint.
    pub fn intersect(&self, other: &BoxSet) -> Result<BoxSet> {
        if self.dim() != other.dim() {
            return Err(ReachError::DimensionMismatch(format!(
                "box dims {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut comps = Vec::with_capacity(self.dim());
        for (a, b) in self.intervals.iter().zip(other.intervals.iter()) {
            let lo = a.lo().max(b.lo());
            let hi = a.hi().min(b.hi());
            comps.push(crate::interval::Interval::new(lo, hi)?);
        }
        Ok(BoxSet {
            intervals: IVector::new(comps)?,
        })
    }
}

/// Volume-minimizing metric for the image of a ball under the linearized
/// flow: `Â = A₀·F⁻¹`, `M̂ = ÂᵀÂ`. In this metric the stretching factor of
/// the center gradient is exactly 1.
pub fn optimal_metric(f_center: &DMatrix<f64>, a0: &DMatrix<f64>) -> Result<Metric> {
    if f_center.determinant().abs() <= 1e-12 {
        return Err(ReachError::Singular(
            "center gradient is numerically singular".into(),
        ));
    }
    let f_inv = f_center
        .clone()
        .try_inverse()
        .ok_or_else(|| ReachError::Singular("center gradient is not invertible".into()))?;
    Metric::from_a(a0 * f_inv)
}

/// Guaranteed upper bound `Λ ≥ sup { ‖A G A₀⁻¹‖₂ : G ∈ [F] }`, the growth of
/// the weighted radius from the initial metric `m0` to `metric`.
pub fn stretching_factor(f: &IMatrix, metric: &Metric, m0: &Metric) -> Result<f64> {
    weighted_sigma_max_bound(f, metric.a(), m0.a_inv())
}

/// Box around the intersection of a same-centered ellipsoid and Euclidean
/// ball: intersection of the two axis-aligned bounding boxes.
pub fn intersection_box(ellipsoid: &Ellipsoid, ball: &Ellipsoid) -> Result<BoxSet> {
    if (&ellipsoid.center - &ball.center).norm() > 1e-9 * (1.0 + ball.center.norm()) {
        return Err(ReachError::InvalidInput(
            "intersection_box expects a shared center".into(),
        ));
    }
    ellipsoid.bounding_box()?.intersect(&ball.bounding_box()?)
}

fn unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::PI.powf(nf / 2.0) / statrs::function::gamma::gamma(nf / 2.0 + 1.0)
}

/// `vol(B_M(c, δ)) = c_n δⁿ / √(det M)` with `c_n` the unit-ball volume.
pub fn ellipsoid_volume(e: &Ellipsoid) -> f64 {
    let n = e.metric.dim();
    unit_ball_volume(n) * e.radius.powi(n as i32) / e.metric.det_m().sqrt()
}

/// One uniform draw on the unit sphere surface, deterministic per
/// `(seed, index)` so the index range can be sharded across threads.
pub fn sphere_direction(n: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// `count` i.i.d. uniform samples on the sphere surface of the given radius.
pub fn sample_sphere_surface(
    n: usize,
    center: &DVector<f64>,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if n < 1 {
        return Err(ReachError::InvalidInput("sphere dimension must be >= 1".into()));
    }
    if center.len() != n {
        return Err(ReachError::DimensionMismatch(format!(
            "center dim {} vs n = {n}",
            center.len()
        )));
    }
    if !(radius > 0.0) || count < 1 {
        return Err(ReachError::InvalidInput(format!(
            "need radius > 0 and count >= 1, got radius = {radius}, count = {count}"
        )));
    }
    Ok((0..count as u64)
        .map(|i| center + sphere_direction(n, seed, i) * radius)
        .collect())
}

/// Fraction of the surface of the `(n−1)`-sphere of radius `rho` covered by
/// a cap of Euclidean (chord) radius `r` around a surface point.
///
/// The colatitude is `theta = 2·asin(r / 2rho)` and the fraction is the
/// regularized incomplete beta function of `sin² theta`, split at the equator.
pub fn cap_surface_fraction(n: usize, sphere_radius: f64, cap_chord_radius: f64) -> Result<f64> {
    if n < 2 {
        return Err(ReachError::InvalidInput(
            "cap fraction needs ambient dimension >= 2".into(),
        ));
    }
    if !(sphere_radius > 0.0) {
        return Err(ReachError::InvalidInput(format!(
            "sphere radius must be positive, got {sphere_radius}"
        )));
    }
    if cap_chord_radius < 0.0 || cap_chord_radius.is_nan() {
        return Err(ReachError::InvalidInput(format!(
            "cap radius must be nonnegative, got {cap_chord_radius}"
        )));
    }
    let half = (cap_chord_radius / (2.0 * sphere_radius)).min(1.0);
    if half >= 1.0 {
        return Ok(1.0);
    }
    let theta = 2.0 * half.asin();
    let a = (n as f64 - 1.0) / 2.0;
    let frac = if theta <= std::f64::consts::FRAC_PI_2 {
        0.5 * beta_reg(a, 0.5, theta.sin().powi(2))
    } else {
        1.0 - 0.5 * beta_reg(a, 0.5, (std::f64::consts::PI - theta).sin().powi(2))
    };
    Ok(frac.clamp(0.0, 1.0))
}
