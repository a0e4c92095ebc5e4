//! Interval-Lipschitz engine.
//!
//! Per timestep a global Lipschitz bound `Λ` of the flow map over the whole
//! initial ball is obtained by validated interval integration of the
//! gradient. Random surface samples are integrated from the initial time and
//! each contributes a safety cap of radius `(μ·m̄ − d)/Λ`; samples landing
//! outside every existing safety region are additionally refined by gradient
//! ascent on the distance. The confidence product runs over the random
//! samples only; refined endpoints sharpen `m̄` and the skip-refinement
//! region but add no independent probability mass.

use super::{
    compute_probability, distance_gradient, safety_radius_slr, ConfidenceTimeout, SampleRecord,
    StepDiagnostics, StochasticConfig, StochasticRun, StochasticStep,
};
use crate::error::{ReachError, Result};
use crate::geometry::{sphere_direction, Metric};
use crate::interval::{imatrix_sigma_max_bound, IMatrix, IVector};
use crate::ode::{
    integrate_validated, model_registry, solve_augmented, solve_ivp, StepControl, ValidatedState,
    VectorField,
};
use nalgebra::DVector;
use rayon::prelude::*;

const ASCENT_MAX_STEPS: usize = 500;

fn make_record(
    field: &dyn VectorField,
    cfg: &StochasticConfig,
    center: &DVector<f64>,
    x0: DVector<f64>,
    t: f64,
) -> Result<SampleRecord> {
    let aug = solve_augmented(field, &x0, (0.0, t), &cfg.integrator)?;
    let dist = (&aug.x - center).norm();
    let lambda_x = aug.f.singular_values().max();
    Ok(SampleRecord {
        x0_sample: x0,
        chi: aug.x,
        f: aug.f,
        lambda_x,
        dist,
        cap_radius: 0.0,
    })
}

/// Fixed-step gradient ascent on the distance over the sphere surface, with
/// backtracking halving; returns the refined endpoint's record.
fn refine_local_maximum(
    field: &dyn VectorField,
    cfg: &StochasticConfig,
    center: &DVector<f64>,
    start: &SampleRecord,
    t: f64,
) -> Result<SampleRecord> {
    let euclid = Metric::euclidean(cfg.x0.len());
    let mut current = start.clone();
    let mut step = 0.05 * cfg.delta0;
    for _ in 0..ASCENT_MAX_STEPS {
        let grad = distance_gradient(&current, center, &euclid, &cfg.x0);
        let gnorm = grad.norm();
        if gnorm < 1e-8 * (current.dist / cfg.delta0).max(1.0) {
            break;
        }
        let proposal_raw = &current.x0_sample + grad * (step / gnorm);
        let offset = &proposal_raw - &cfg.x0;
        let scale = cfg.delta0 / offset.norm();
        let proposal = &cfg.x0 + offset * scale;
        let candidate = make_record(field, cfg, center, proposal, t)?;
        if candidate.dist > current.dist {
            current = candidate;
        } else {
            step *= 0.5;
            if step < 1e-4 * cfg.delta0 {
                break;
            }
        }
    }
    Ok(current)
}

pub fn slr_run(cfg: &StochasticConfig) -> Result<StochasticRun> {
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

    let interval_step = match cfg.integrator.control {
        StepControl::Rk4Fixed { step } => step.min(cfg.dt),
        StepControl::Rk45Adaptive { .. } => 0.01f64.min(cfg.dt),
    };
    let x0_box = IVector::centered(&cfg.x0, cfg.delta0)?;
    let mut istate = ValidatedState::new(x0_box, &IMatrix::identity(n))?;

    let mut steps = Vec::new();
    let mut diagnostics = Vec::new();
    let mut center = cfg.x0.clone();
    let mut next_index: u64 = 0;
    let target = 1.0 - cfg.gamma;

    let n_steps = (cfg.time_horizon / cfg.dt).round().max(1.0) as usize;
    for j in 1..=n_steps {
        let t_prev = (j - 1) as f64 * cfg.dt;
        let t = if j == n_steps {
            cfg.time_horizon
        } else {
            j as f64 * cfg.dt
        };
        center = solve_ivp(field.as_ref(), &center, (t_prev, t), &cfg.integrator)?;
        integrate_validated(field.as_ref(), &mut istate, (t_prev, t), interval_step)?;
        let lambda_sigma = imatrix_sigma_max_bound(&istate.gradient());
        if !lambda_sigma.is_finite() {
            return Err(ReachError::Blowup { t });
        }

        // Per-timestep sample lists: `random` carries the probability
        // product, `visited` only the refinements.
        let mut random: Vec<SampleRecord> = Vec::new();
        let mut visited: Vec<SampleRecord> = Vec::new();
        let mut samples_this_step = 0usize;
        let confidence;
        loop {
            let want = cfg.batch_size.min(cfg.max_samples - samples_this_step);
            let candidates: Vec<DVector<f64>> = (0..want as u64)
                .map(|k| {
                    &cfg.x0 + sphere_direction(n, cfg.rng_seed, next_index + k) * cfg.delta0
                })
                .collect();
            next_index += want as u64;
            samples_this_step += want;
            let in_some_cap = |x: &DVector<f64>| {
                random
                    .iter()
                    .chain(visited.iter())
                    .any(|r| (x - &r.x0_sample).norm() <= r.cap_radius)
            };
            // Samples already inside a certified cap skip the local search
            // but still enter the probability product.
            let refine_flags: Vec<bool> = candidates.iter().map(|x| !in_some_cap(x)).collect();
            let fresh: Result<Vec<SampleRecord>> = candidates
                .into_par_iter()
                .map(|x0| make_record(field.as_ref(), cfg, &center, x0, t))
                .collect();
            let fresh = fresh?;
            let refined: Result<Vec<SampleRecord>> = fresh
                .par_iter()
                .zip(&refine_flags)
                .filter(|(_, &flag)| flag)
                .map(|(rec, _)| refine_local_maximum(field.as_ref(), cfg, &center, rec, t))
                .collect();
            let refined = refined?;
            random.extend(fresh);
            visited.extend(refined);

            if random.iter().chain(visited.iter()).any(|r| !r.dist.is_finite()) {
                return Err(ReachError::Blowup { t });
            }
            let m_bar = random
                .iter()
                .chain(visited.iter())
                .map(|r| r.dist)
                .fold(0.0, f64::max);
            for rec in random.iter_mut().chain(visited.iter_mut()) {
                rec.cap_radius = safety_radius_slr(lambda_sigma, cfg.mu, m_bar, rec.dist)?;
            }
            let radii: Vec<f64> = random.iter().map(|r| r.cap_radius).collect();
            let p_bar = compute_probability(&radii, n, cfg.delta0)?;
            if p_bar >= target {
                confidence = p_bar;
                break;
            }
            if samples_this_step >= cfg.max_samples {
                return Ok(StochasticRun {
                    steps,
                    diagnostics,
                    timeout: Some(ConfidenceTimeout {
                        achieved: p_bar,
                        target,
                        samples: samples_this_step,
                    }),
                });
            }
        }

        let m_bar = random
            .iter()
            .chain(visited.iter())
            .map(|r| r.dist)
            .fold(0.0, f64::max);
        let r_min = random
            .iter()
            .map(|r| r.cap_radius)
            .fold(f64::INFINITY, f64::min);
        let r_max = random.iter().map(|r| r.cap_radius).fold(0.0, f64::max);
        steps.push(StochasticStep {
            time: t,
            center: center.clone(),
            radius: cfg.mu * m_bar,
            m_bar,
            achieved_confidence: confidence,
            samples_used: samples_this_step,
        });
        diagnostics.push(StepDiagnostics {
            time: t,
            delta_lambda: lambda_sigma,
            r_min,
            r_max,
            samples_used: samples_this_step,
        });
    }

    Ok(StochasticRun {
        steps,
        diagnostics,
        timeout: None,
    })
}
