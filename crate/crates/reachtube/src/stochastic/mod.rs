//! Statistical reachtube engines.
//!
//! Both engines bound, per timestep, the maximal distance `m*` of any
//! trajectory from the center trajectory by the sample maximum `m̄` scaled
//! with a tightness factor `μ > 1`, and certify `Pr(m* ≤ μ·m̄) ≥ 1 − γ` by
//! covering the initial sphere surface with caps on which the bound is
//! guaranteed. They differ in how cap radii are obtained: the Lipschitz-cap
//! engine estimates the local variation of the stretching factors
//! statistically, the interval engine uses a global interval-arithmetic
//! Lipschitz bound plus gradient-ascent refinement.

mod gotube;
mod slr;

pub use gotube::gotube_run;
pub use slr::slr_run;

use crate::error::{ReachError, Result};
use crate::geometry::{cap_surface_fraction, Metric};
use crate::ode::{IntegratorConfig, ModelParams};
use crate::stats::student_t_quantile;
use nalgebra::{DMatrix, DVector};

/// One surface sample carried through a timestep.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    /// Initial point on the surface of `B0`.
    pub x0_sample: DVector<f64>,
    /// Image under the flow at the current timestep.
    pub chi: DVector<f64>,
    /// Gradient of the flow map at `x0_sample`.
    pub f: DMatrix<f64>,
    /// `‖F‖` in the configured metric.
    pub lambda_x: f64,
    /// Distance of the image from the center image.
    pub dist: f64,
    /// Radius of the cap around `x0_sample` on which the bound is certified.
    pub cap_radius: f64,
}

/// ν statistics behind the Δλ bound.
#[derive(Debug, Clone)]
pub struct CapStatistics {
    pub nu_samples: Vec<f64>,
    pub nu_mean: f64,
    pub nu_sd: f64,
    pub delta_lambda: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochasticEngine {
    GoTube,
    Slr,
}

#[derive(Debug, Clone)]
pub struct StochasticConfig {
    pub model: String,
    pub params: ModelParams,
    pub x0: DVector<f64>,
    pub delta0: f64,
    pub time_horizon: f64,
    pub dt: f64,
    /// Tightness factor `μ > 1`.
    pub mu: f64,
    /// `1 − γ` is the certified confidence.
    pub gamma: f64,
    pub batch_size: usize,
    pub max_samples: usize,
    pub rng_seed: u64,
    pub engine: StochasticEngine,
    pub integrator: IntegratorConfig,
}

impl StochasticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 1.0) {
            return Err(ReachError::InvalidInput(format!(
                "mu must exceed 1, got {}",
                self.mu
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ReachError::InvalidInput(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.batch_size < 2 {
            return Err(ReachError::InvalidInput(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.delta0 > 0.0) {
            return Err(ReachError::InvalidInput(format!(
                "delta0 must be positive, got {}",
                self.delta0
            )));
        }
        if !(self.dt > 0.0 && self.dt <= self.time_horizon) {
            return Err(ReachError::InvalidInput(format!(
                "need 0 < dt <= T, got dt = {}, T = {}",
                self.dt, self.time_horizon
            )));
        }
        if self.max_samples < self.batch_size {
            return Err(ReachError::InvalidInput(
                "max_samples must allow at least one batch".into(),
            ));
        }
        Ok(())
    }
}

/// One emitted timestep: a Euclidean ball of radius `μ·m̄` around the center
/// image, with the confidence actually achieved.
#[derive(Debug, Clone)]
pub struct StochasticStep {
    pub time: f64,
    pub center: DVector<f64>,
    pub radius: f64,
    pub m_bar: f64,
    pub achieved_confidence: f64,
    pub samples_used: usize,
}

/// Per-step diagnostics beyond the emitted ball.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub time: f64,
    pub delta_lambda: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub samples_used: usize,
}

/// Set when the sample budget ran out before the target confidence.
#[derive(Debug, Clone)]
pub struct ConfidenceTimeout {
    pub achieved: f64,
    pub target: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct StochasticRun {
    pub steps: Vec<StochasticStep>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub timeout: Option<ConfidenceTimeout>,
}

/// Weighted distance between two flow images.
pub fn distance(chi_x: &DVector<f64>, chi_center: &DVector<f64>, metric: &Metric) -> f64 {
    metric.norm(&(chi_x - chi_center))
}

/// `σ_max` of the metric-weighted gradient — the local Lipschitz constant of
/// the flow map between the two weighted norms.
pub fn local_lipschitz(
    f: &DMatrix<f64>,
    metric_range: &Metric,
    metric_domain: &Metric,
) -> Result<f64> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(ReachError::InvalidInput(
            "non-finite gradient entries".into(),
        ));
    }
    let w = metric_range.a() * f * metric_domain.a_inv();
    Ok(w.singular_values().max())
}

/// Upper confidence bound on the mean local variation of the stretching
/// factors: `Δλ = ν̄ + t*_{γ/2}(N−2) · s(ν)/√(N−1)` with
/// `ν = |λ_x − λ_X| / ‖x − X‖` over consecutive sample pairs in draw order.
pub fn delta_lambda(records: &[SampleRecord], gamma: f64) -> Result<CapStatistics> {
    let n = records.len();
    if n < 3 {
        return Err(ReachError::DegenerateStatistics(format!(
            "need at least 3 samples for the t-bound, got {n}"
        )));
    }
    let mut nu = Vec::with_capacity(n - 1);
    for pair in records.windows(2) {
        let dx = (&pair[0].x0_sample - &pair[1].x0_sample).norm();
        if dx < 1e-14 {
            continue;
        }
        nu.push((pair[0].lambda_x - pair[1].lambda_x).abs() / dx);
    }
    if nu.is_empty() {
        return Err(ReachError::DegenerateStatistics(
            "all sample pairs coincident".into(),
        ));
    }
    let m = nu.len() as f64;
    let mean = nu.iter().sum::<f64>() / m;
    let sd = if nu.len() > 1 {
        (nu.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let t_star = student_t_quantile(gamma / 2.0, n - 2)?;
    let dl = mean + t_star * sd / ((n as f64) - 1.0).sqrt();
    Ok(CapStatistics {
        nu_samples: nu,
        nu_mean: mean,
        nu_sd: sd,
        delta_lambda: dl.max(0.0),
        n,
    })
}

/// Cap radius certified by the Lipschitz-variation bound: the positive root
/// of `λ_x·r + Δλ·r² = μ·m̄ − d`, with the linear-only limit when `Δλ = 0`
/// and a full-sphere sentinel when both coefficients vanish with slack left.
pub fn cap_radius_gotube(
    lambda_x: f64,
    delta_lambda: f64,
    mu: f64,
    m_bar: f64,
    dist: f64,
) -> Result<f64> {
    let slack = mu * m_bar - dist;
    if slack < -1e-12 * (1.0 + mu * m_bar) {
        return Err(ReachError::InvalidInput(format!(
            "sample distance {dist} exceeds the bound {}",
            mu * m_bar
        )));
    }
    let slack = slack.max(0.0);
    if lambda_x < 0.0 || delta_lambda < 0.0 {
        return Err(ReachError::InvalidInput(
            "negative Lipschitz coefficients".into(),
        ));
    }
    if delta_lambda > 0.0 {
        Ok((-lambda_x + (lambda_x * lambda_x + 4.0 * delta_lambda * slack).sqrt())
            / (2.0 * delta_lambda))
    } else if lambda_x > 0.0 {
        Ok(slack / lambda_x)
    } else if slack > 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(0.0)
    }
}

/// Cap radius certified by a global interval Lipschitz bound.
pub fn safety_radius_slr(lambda_sigma: f64, mu: f64, m_bar: f64, dist: f64) -> Result<f64> {
    if !(lambda_sigma > 0.0) {
        return Err(ReachError::InvalidInput(format!(
            "global Lipschitz bound must be positive, got {lambda_sigma}"
        )));
    }
    Ok(((mu * m_bar - dist) / lambda_sigma).max(0.0))
}

/// `p̄ = 1 − ∏(1 − capfrac(r_x))`, accumulated in log space.
pub fn compute_probability(cap_radii: &[f64], n: usize, delta0: f64) -> Result<f64> {
    let mut log_miss = 0.0f64;
    for &r in cap_radii {
        let frac = if r.is_infinite() {
            1.0
        } else {
            cap_surface_fraction(n, delta0, r)?
        };
        if frac >= 1.0 {
            return Ok(1.0);
        }
        log_miss += (-frac).ln_1p();
    }
    Ok(1.0 - log_miss.exp())
}

/// Gradient of the distance with respect to the initial point, projected on
/// the tangent space of the initial sphere at `x0_sample`.
pub fn distance_gradient(
    record: &SampleRecord,
    center_chi: &DVector<f64>,
    metric: &Metric,
    x0_center: &DVector<f64>,
) -> DVector<f64> {
    let n = record.x0_sample.len();
    if record.dist <= 0.0 {
        return DVector::zeros(n);
    }
    let diff = metric.m() * (&record.chi - center_chi);
    let grad = record.f.transpose() * diff / record.dist;
    let radial = &record.x0_sample - x0_center;
    let rn = radial.norm();
    if rn < 1e-14 {
        return grad;
    }
    let u = radial / rn;
    &grad - &u * grad.dot(&u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_sphere_surface;
    use crate::ode::{model_registry, solve_augmented};
    use approx::assert_relative_eq;

    fn record(x0: Vec<f64>, lambda: f64) -> SampleRecord {
        let n = x0.len();
        SampleRecord {
            x0_sample: DVector::from_vec(x0),
            chi: DVector::zeros(n),
            f: DMatrix::identity(n, n),
            lambda_x: lambda,
            dist: 0.0,
            cap_radius: 0.0,
        }
    }

    #[test]
    fn distance_examples() {
        let e = Metric::euclidean(2);
        let a = DVector::from_row_slice(&[1.0, 2.0]);
        assert_eq!(distance(&a, &a, &e), 0.0);
        let b = DVector::from_row_slice(&[4.0, 6.0]);
        assert_relative_eq!(distance(&b, &a, &e), 5.0, epsilon = 1e-12);
        let m = Metric::from_m(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        let c = DVector::from_row_slice(&[2.0, 3.0]);
        assert_relative_eq!(distance(&c, &a, &m), 5.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn local_lipschitz_examples() {
        let e = Metric::euclidean(2);
        assert_relative_eq!(
            local_lipschitz(&DMatrix::identity(2, 2), &e, &e).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert_relative_eq!(local_lipschitz(&f, &e, &e).unwrap(), 2.0, epsilon = 1e-12);

        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        use rand::prelude::*;
        let e4 = Metric::euclidean(4);
        for _ in 0..20 {
            let f = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0f64..1.0));
            let want = f.clone().singular_values().max();
            assert!((local_lipschitz(&f, &e4, &e4).unwrap() - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn delta_lambda_zero_for_constant_lambda() {
        let recs: Vec<_> = (0..10)
            .map(|i| {
                let a = i as f64;
                record(vec![a.cos(), a.sin()], 2.5)
            })
            .collect();
        let s = delta_lambda(&recs, 0.05).unwrap();
        assert_eq!(s.delta_lambda, 0.0);
        assert_eq!(s.nu_mean, 0.0);
    }

    #[test]
    fn delta_lambda_needs_enough_samples_and_distinct_points() {
        let recs: Vec<_> = (0..2).map(|i| record(vec![i as f64, 0.0], 1.0)).collect();
        assert!(delta_lambda(&recs, 0.05).is_err());
        let coincident: Vec<_> = (0..5).map(|_| record(vec![1.0, 0.0], 1.0)).collect();
        assert!(delta_lambda(&coincident, 0.05).is_err());
    }

    #[test]
    fn delta_lambda_dominates_nu_mean() {
        let recs: Vec<_> = (0..30)
            .map(|i| {
                let a = i as f64 * 0.2;
                record(vec![a.cos(), a.sin()], 1.0 + 0.3 * a.cos())
            })
            .collect();
        let s = delta_lambda(&recs, 0.05).unwrap();
        assert!(s.nu_sd > 0.0);
        assert!(s.delta_lambda >= s.nu_mean);
    }

    #[test]
    fn delta_lambda_upper_bounds_resampled_nu_means() {
        // lambda(x) = c*x1 on the unit circle; the t-bound at level gamma must
        // cover the empirical mean of fresh nu draws in >= 1-gamma of runs.
        let gamma = 0.1;
        let c = 2.0;
        let mut covered = 0;
        let total = 1000;
        for seed in 0..total {
            let pts = sample_sphere_surface(2, &DVector::zeros(2), 1.0, 40, 9000 + seed).unwrap();
            let recs: Vec<_> = pts
                .iter()
                .map(|p| record(vec![p[0], p[1]], c * p[0]))
                .collect();
            let s = delta_lambda(&recs, gamma).unwrap();
            // Fresh draw of nu values from the same process; a larger draw
            // keeps the comparison close to the population mean.
            let pts2 =
                sample_sphere_surface(2, &DVector::zeros(2), 1.0, 200, 500_000 + seed).unwrap();
            let recs2: Vec<_> = pts2
                .iter()
                .map(|p| record(vec![p[0], p[1]], c * p[0]))
                .collect();
            let mut fresh = Vec::new();
            for pair in recs2.windows(2) {
                let dx = (&pair[0].x0_sample - &pair[1].x0_sample).norm();
                if dx >= 1e-14 {
                    fresh.push((pair[0].lambda_x - pair[1].lambda_x).abs() / dx);
                }
            }
            let fresh_mean = fresh.iter().sum::<f64>() / fresh.len() as f64;
            if s.delta_lambda >= fresh_mean {
                covered += 1;
            }
        }
        assert!(
            covered as f64 >= (1.0 - gamma) * total as f64,
            "covered {covered}/{total}"
        );
    }

    #[test]
    fn cap_radius_branches() {
        // Zero slack.
        assert_eq!(cap_radius_gotube(1.0, 0.5, 1.1, 1.0, 1.1).unwrap(), 0.0);
        // Linear limit.
        assert_relative_eq!(
            cap_radius_gotube(2.0, 0.0, 2.0, 1.0, 1.0).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // Continuity of the quadratic branch at small delta_lambda.
        let r = cap_radius_gotube(2.0, 1e-8, 2.0, 1.0, 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-8);
        // Full-sphere sentinel.
        assert!(cap_radius_gotube(0.0, 0.0, 2.0, 1.0, 0.5)
            .unwrap()
            .is_infinite());
        // Contract violation.
        assert!(cap_radius_gotube(1.0, 0.5, 1.1, 1.0, 2.0).is_err());
    }

    #[test]
    fn cap_radius_solves_the_quadratic() {
        for &(l, dl, mu, mb, d) in &[
            (1.0, 0.5, 1.1, 2.0, 1.5),
            (0.3, 2.0, 1.5, 0.7, 0.2),
            (4.0, 0.01, 2.0, 1.0, 1.9),
        ] {
            let r = cap_radius_gotube(l, dl, mu, mb, d).unwrap();
            let residual = l * r + dl * r * r - (mu * mb - d);
            assert!(residual.abs() <= 1e-10, "residual = {residual}");
        }
    }

    #[test]
    fn cap_radius_monotonicity() {
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let d = 0.1 * k as f64;
            let r = cap_radius_gotube(1.0, 0.5, 1.2, 2.0, d).unwrap();
            assert!(r <= prev + 1e-12);
            prev = r;
        }
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let l = 0.3 * k as f64;
            let r = cap_radius_gotube(l, 0.5, 1.2, 2.0, 0.5).unwrap();
            assert!(r <= prev + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn slr_radius_examples() {
        assert_eq!(safety_radius_slr(1.0, 1.1, 1.0, 1.1).unwrap(), 0.0);
        assert_relative_eq!(
            safety_radius_slr(4.0, 3.0, 1.0, 1.0).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(safety_radius_slr(0.0, 1.1, 1.0, 0.5).is_err());
    }

    #[test]
    fn slr_cap_members_stay_bounded_for_contractive_linear() {
        // x' = -x: lambda_sigma = e^{-t} bounds the flow Lipschitz constant,
        // so every y in the cap must satisfy d(y) <= mu*m_bar.
        let t = 1.0;
        let lam = (-t as f64).exp();
        let mu = 1.05;
        let delta0 = 0.5;
        let m_bar = delta0 * lam;
        let mut p = ModelParams::new();
        p.matrix("A", vec![vec![-1.0, 0.0], vec![0.0, -1.0]])
            .vector("c", vec![0.0, 0.0]);
        let field = model_registry("linear", &p).unwrap();
        let x0c = DVector::zeros(2);
        let xs = sample_sphere_surface(2, &x0c, delta0, 1, 3).unwrap();
        let x = &xs[0];
        let cfg = IntegratorConfig::default();
        let chi = crate::ode::solve_ivp(field.as_ref(), x, (0.0, t), &cfg).unwrap();
        let d = chi.norm();
        let r = safety_radius_slr(lam, mu, m_bar, d).unwrap();
        assert!(r > 0.0);
        // Sample the cap (chord ball around x intersected with the sphere).
        let mut hits = 0;
        let mut idx = 0u64;
        while hits < 1000 {
            let ys = sample_sphere_surface(2, &x0c, delta0, 1, 100 + idx).unwrap();
            idx += 1;
            let y = &ys[0];
            if (y - x).norm() > r {
                continue;
            }
            hits += 1;
            let chi_y = crate::ode::solve_ivp(field.as_ref(), y, (0.0, t), &cfg).unwrap();
            assert!(chi_y.norm() <= mu * m_bar * (1.0 + 1e-9));
        }
    }

    #[test]
    fn probability_examples() {
        assert_eq!(compute_probability(&[], 3, 1.0).unwrap(), 0.0);
        assert_eq!(
            compute_probability(&[f64::INFINITY], 3, 1.0).unwrap(),
            1.0
        );
        // Two caps of fraction 1/4 each: theta = pi/3 chords on the 2-sphere.
        let r = 1.0;
        let p = compute_probability(&[r, r], 3, 1.0).unwrap();
        assert_relative_eq!(p, 0.4375, epsilon = 1e-10);
    }

    #[test]
    fn probability_monotone_in_caps() {
        let mut radii = Vec::new();
        let mut prev = 0.0;
        for _ in 0..50 {
            radii.push(0.3);
            let p = compute_probability(&radii, 4, 1.0).unwrap();
            assert!(p >= prev);
            prev = p;
        }
        assert!(prev > 0.0 && prev < 1.0);
    }

    #[test]
    fn distance_gradient_zero_for_identity_flow() {
        // Under f = 0 the distance on the sphere surface is constant delta0,
        // so the tangent-projected gradient vanishes.
        let x0c = DVector::zeros(2);
        let xs = sample_sphere_surface(2, &x0c, 1.0, 10, 17).unwrap();
        let e = Metric::euclidean(2);
        for x in &xs {
            let rec = SampleRecord {
                x0_sample: x.clone(),
                chi: x.clone(),
                f: DMatrix::identity(2, 2),
                lambda_x: 1.0,
                dist: 1.0,
                cap_radius: 0.0,
            };
            let g = distance_gradient(&rec, &x0c, &e, &x0c);
            assert!(g.norm() <= 1e-12);
        }
    }

    #[test]
    fn gradient_ascent_finds_the_stretch_axis() {
        // Flow gradient diag(2, 1): the distance maximizer on the unit circle
        // is the +-e1 axis.
        let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let e = Metric::euclidean(2);
        let x0c = DVector::zeros(2);
        let mut x = DVector::from_row_slice(&[0.6f64.cos(), 0.6f64.sin()]);
        for _ in 0..500 {
            let chi = &f * &x;
            let rec = SampleRecord {
                x0_sample: x.clone(),
                chi: chi.clone(),
                f: f.clone(),
                lambda_x: 2.0,
                dist: chi.norm(),
                cap_radius: 0.0,
            };
            let g = distance_gradient(&rec, &x0c, &e, &x0c);
            if g.norm() < 1e-12 {
                break;
            }
            x += g * 0.05;
            x /= x.norm();
        }
        let angle = x[1].abs().atan2(x[0].abs());
        assert!(angle <= 1e-3, "angle = {angle}");
    }

    #[test]
    fn distance_gradient_matches_finite_differences() {
        let field = model_registry("vanderpol", &ModelParams::new()).unwrap();
        let cfg = IntegratorConfig::default();
        let x0c = DVector::from_row_slice(&[0.8, 0.3]);
        let delta0 = 0.2;
        let t = 0.5;
        let chi_c = crate::ode::solve_ivp(field.as_ref(), &x0c, (0.0, t), &cfg).unwrap();
        let e = Metric::euclidean(2);
        let xs = sample_sphere_surface(2, &x0c, delta0, 2, 71).unwrap();
        for x in &xs {
            let aug = solve_augmented(field.as_ref(), x, (0.0, t), &cfg).unwrap();
            let d = (&aug.x - &chi_c).norm();
            let rec = SampleRecord {
                x0_sample: x.clone(),
                chi: aug.x.clone(),
                f: aug.f.clone(),
                lambda_x: 0.0,
                dist: d,
                cap_radius: 0.0,
            };
            let g = distance_gradient(&rec, &chi_c, &e, &x0c);
            // Tangent direction at x on the circle.
            let radial = (x - &x0c) / delta0;
            let tangent = DVector::from_row_slice(&[-radial[1], radial[0]]);
            let h = 1e-6;
            let d_at = |y: &DVector<f64>| {
                let z = crate::ode::solve_ivp(field.as_ref(), y, (0.0, t), &cfg).unwrap();
                (&z - &chi_c).norm()
            };
            let perturb = |s: f64| {
                let y = x + &tangent * s;
                let y = &x0c + (&y - &x0c) * (delta0 / (&y - &x0c).norm());
                d_at(&y)
            };
            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
            let along = g.dot(&tangent);
            assert!(
                (along - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                "grad {along} vs fd {fd}"
            );
        }
    }
}
