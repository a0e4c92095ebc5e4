//! Deterministic reachtube construction.
//!
//! Per timestep the engine advances the set center, the cumulative center
//! gradient, and a validated interval enclosure of the flow gradient over the
//! current box. From these it derives the volume-optimal metric, bounds the
//! weighted stretching factor for that metric and for the Euclidean one, and
//! intersects the two resulting bounding sets. The intersection box becomes
//! the next step's interval state — this per-step re-boxing is what keeps the
//! enclosure from winding up under rotation-heavy dynamics.

use crate::error::{ReachError, Result};
use crate::geometry::{
    intersection_box, optimal_metric, stretching_factor, BoxSet, Ellipsoid, Metric,
};
use crate::interval::IMatrix;
use crate::ode::{
    integrate_validated, model_registry, solve_augmented_from, solve_ivp, AugmentedState,
    IntegratorConfig, ModelParams, StepControl, ValidatedState, VectorField,
};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct LrtngConfig {
    pub model: String,
    pub params: ModelParams,
    pub x0: DVector<f64>,
    pub delta0: f64,
    /// Initial metric; `None` means Euclidean.
    pub metric0: Option<Metric>,
    pub time_horizon: f64,
    pub dt: f64,
    pub integrator: IntegratorConfig,
}

impl LrtngConfig {
    fn validate(&self) -> Result<()> {
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
        Ok(())
    }

    fn metric0(&self) -> Metric {
        self.metric0
            .clone()
            .unwrap_or_else(|| Metric::euclidean(self.x0.len()))
    }

    /// Substep for the validated interval integration.
    fn interval_step(&self) -> f64 {
        let cap = match self.integrator.control {
            StepControl::Rk4Fixed { step } => step,
            StepControl::Rk45Adaptive { .. } => 0.01,
        };
        cap.min(self.dt)
    }
}

/// One emitted timestep: bounding ellipsoid in the step's metric, Euclidean
/// bounding ball, and their intersection box.
#[derive(Debug, Clone)]
pub struct LrtngStep {
    pub time: f64,
    pub center: DVector<f64>,
    pub ellipsoid: Ellipsoid,
    pub euclid_ball: Ellipsoid,
    pub box_set: BoxSet,
    pub gradient_enclosure: IMatrix,
}

/// A (possibly partial) tube plus run diagnostics.
#[derive(Debug, Clone)]
pub struct LrtngRun {
    pub steps: Vec<LrtngStep>,
    /// Time at which the enclosure blew up, if it did; the steps before it
    /// remain valid.
    pub blowup_time: Option<f64>,
    pub diagnostics: Vec<String>,
}

fn initial_step(cfg: &LrtngConfig) -> Result<LrtngStep> {
    let m0 = cfg.metric0();
    let ellipsoid = Ellipsoid::new(cfg.x0.clone(), m0, cfg.delta0)?;
    let euclid_ball = Ellipsoid::euclidean_ball(cfg.x0.clone(), cfg.delta0)?;
    let box_set = intersection_box(&ellipsoid, &euclid_ball)?;
    Ok(LrtngStep {
        time: 0.0,
        center: cfg.x0.clone(),
        ellipsoid,
        euclid_ball,
        box_set,
        gradient_enclosure: IMatrix::identity(cfg.x0.len()),
    })
}

pub fn lrtng_run(cfg: &LrtngConfig) -> Result<LrtngRun> {
    cfg.validate()?;
    let field = model_registry(&cfg.model, &cfg.params)?;
    let n = field.dim();
    if cfg.x0.len() != n {
        return Err(ReachError::DimensionMismatch(format!(
            "model {} has dim {n}, got x0 of dim {}",
            cfg.model,
            cfg.x0.len()
        )));
    }
    let m0 = cfg.metric0();
    let euclid = Metric::euclidean(n);
    let step0 = initial_step(cfg)?;

    let mut steps = vec![step0];
    let mut diagnostics = Vec::new();
    let mut blowup_time = None;

    // Running quantities: center trajectory, cumulative center gradient, and
    // the interval state (re-seeded from each intersection box) whose frame
    // carries the cumulative gradient enclosure.
    let mut center_aug = AugmentedState::initial(cfg.x0.clone());
    let mut istate = ValidatedState::new(
        steps[0].box_set.intervals.clone(),
        &IMatrix::identity(n),
    )?;
    let mut metric = m0.clone();

    let n_steps = (cfg.time_horizon / cfg.dt).round().max(1.0) as usize;
    for j in 1..=n_steps {
        let t_prev = (j - 1) as f64 * cfg.dt;
        let t = if j == n_steps {
            cfg.time_horizon
        } else {
            j as f64 * cfg.dt
        };
        match advance_step(
            cfg,
            field.as_ref(),
            &m0,
            &euclid,
            &mut center_aug,
            &mut istate,
            &mut metric,
            &mut diagnostics,
            (t_prev, t),
        ) {
            Ok(step) => {
                istate.reseed_state(step.box_set.intervals.clone());
                steps.push(step);
            }
            Err(e) => {
                diagnostics.push(format!("blowup at t = {t}: {e}"));
                blowup_time = Some(t);
                break;
            }
        }
    }
    Ok(LrtngRun {
        steps,
        blowup_time,
        diagnostics,
    })
}

#[allow(clippy::too_many_arguments)]
fn advance_step(
    cfg: &LrtngConfig,
    field: &dyn VectorField,
    m0: &Metric,
    euclid: &Metric,
    center_aug: &mut AugmentedState,
    istate: &mut ValidatedState,
    metric: &mut Metric,
    diagnostics: &mut Vec<String>,
    t_span: (f64, f64),
) -> Result<LrtngStep> {
    let (_, t) = t_span;
    *center_aug = solve_augmented_from(field, center_aug, t_span, &cfg.integrator)?;
    integrate_validated(field, istate, t_span, cfg.interval_step())?;
    let f_enclosure = istate.gradient();

    match optimal_metric(&center_aug.f, m0.a()) {
        Ok(m) => *metric = m,
        Err(ReachError::Singular(_)) => {
            diagnostics.push(format!(
                "t = {t}: singular center gradient, reusing previous metric"
            ));
        }
        Err(e) => return Err(e),
    }

    let lam_m = stretching_factor(&f_enclosure, metric, m0)?;
    let lam_i = stretching_factor(&f_enclosure, euclid, m0)?;
    if !(lam_m.is_finite() && lam_i.is_finite()) {
        return Err(ReachError::Blowup { t });
    }

    let ellipsoid = Ellipsoid::new(center_aug.x.clone(), metric.clone(), lam_m * cfg.delta0)?;
    let euclid_ball = Ellipsoid::euclidean_ball(center_aug.x.clone(), lam_i * cfg.delta0)?;
    let box_set = intersection_box(&ellipsoid, &euclid_ball)?;
    if !box_set.intervals.is_finite() {
        return Err(ReachError::Blowup { t });
    }
    Ok(LrtngStep {
        time: t,
        center: center_aug.x.clone(),
        ellipsoid,
        euclid_ball,
        box_set,
        gradient_enclosure: f_enclosure,
    })
}

/// Per-step containment counters from a Monte Carlo audit.
#[derive(Debug, Clone)]
pub struct AuditStepReport {
    pub time: f64,
    pub box_violations: usize,
    pub ellipsoid_violations: usize,
    pub ball_violations: usize,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub trials: usize,
    pub per_step: Vec<AuditStepReport>,
}

impl AuditReport {
    pub fn total_violations(&self) -> usize {
        self.per_step
            .iter()
            .map(|s| s.box_violations + s.ellipsoid_violations + s.ball_violations)
            .sum()
    }

    pub fn is_clean(&self) -> bool {
        self.total_violations() == 0
    }
}

/// Draw a point uniformly from the initial ball `B_{M0}(x0, delta0)`,
/// deterministic per `(seed, trial index)`.
fn sample_initial_point(cfg: &LrtngConfig, m0: &Metric, seed: u64, index: u64) -> DVector<f64> {
    let n = cfg.x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let dir = loop {
        let v = DVector::from_fn(n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let norm = v.norm();
        if norm > 1e-12 {
            break v / norm;
        }
    };
    let r = rng.gen_range(0.0f64..1.0).powf(1.0 / n as f64);
    &cfg.x0 + m0.a_inv() * dir * (r * cfg.delta0)
}

/// Integrate random members of the initial ball through every timestep and
/// count containment failures against the tube's sets. A sound tube reports
/// zero violations; violations are reported, never thrown.
pub fn conservativeness_audit(
    tube: &[LrtngStep],
    cfg: &LrtngConfig,
    trials: usize,
    rng_seed: u64,
) -> Result<AuditReport> {
    cfg.validate()?;
    let field = model_registry(&cfg.model, &cfg.params)?;
    let m0 = cfg.metric0();

    let counts: Vec<(usize, usize, usize)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut x = sample_initial_point(cfg, &m0, rng_seed, trial);
            let mut per_step = vec![(0usize, 0usize, 0usize); tube.len()];
            let mut t = tube[0].time;
            for (k, step) in tube.iter().enumerate() {
                if k > 0 {
                    match solve_ivp(field.as_ref(), &x, (t, step.time), &cfg.integrator) {
                        Ok(next) => x = next,
                        Err(_) => {
                            // A member trajectory the tube could not hold is a
                            // containment failure for all remaining sets.
                            for slot in per_step.iter_mut().skip(k) {
                                *slot = (1, 1, 1);
                            }
                            break;
                        }
                    }
                    t = step.time;
                }
                let b = !step.box_set.contains_point(&x) as usize;
                let e = !step.ellipsoid.contains(&x) as usize;
                let c = !step.euclid_ball.contains(&x) as usize;
                per_step[k] = (b, e, c);
            }
            per_step
        })
        .reduce(
            || vec![(0usize, 0usize, 0usize); tube.len()],
            |mut acc, per_step| {
                for (a, p) in acc.iter_mut().zip(per_step) {
                    a.0 += p.0;
                    a.1 += p.1;
                    a.2 += p.2;
                }
                acc
            },
        );

    Ok(AuditReport {
        trials,
        per_step: tube
            .iter()
            .zip(counts)
            .map(|(s, (b, e, c))| AuditStepReport {
                time: s.time,
                box_violations: b,
                ellipsoid_violations: e,
                ball_violations: c,
            })
            .collect(),
    })
}
