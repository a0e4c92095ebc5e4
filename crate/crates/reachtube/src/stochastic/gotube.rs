//! Lipschitz-cap engine.
//!
//! Per timestep, surface samples are propagated jointly with their flow
//! gradients; the sample maximum distance `m̄` and the statistical bound `Δλ`
//! on the local variation of the stretching factors certify a cap around each
//! sample on which trajectories stay within `μ·m̄`. Batches are added until
//! the union of caps covers the surface with probability at least `1 − γ`.
//! Existing samples continue from their previous state; fresh batches
//! integrate from the initial time so their gradients are exact.

use super::{
    cap_radius_gotube, compute_probability, delta_lambda, ConfidenceTimeout, SampleRecord,
    StepDiagnostics, StochasticConfig, StochasticRun, StochasticStep,
};
use crate::error::{ReachError, Result};
use crate::geometry::sphere_direction;
use crate::ode::{
    model_registry, solve_augmented_from, solve_ivp, AugmentedState, VectorField,
};
use nalgebra::DVector;
use rayon::prelude::*;

fn fresh_batch(
    field: &dyn VectorField,
    cfg: &StochasticConfig,
    t: f64,
    start_index: u64,
    count: usize,
) -> Result<Vec<SampleRecord>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let n = field.dim();
            let x0 = &cfg.x0 + sphere_direction(n, cfg.rng_seed, start_index + k) * cfg.delta0;
            let aug = crate::ode::solve_augmented(field, &x0, (0.0, t), &cfg.integrator)?;
            Ok(SampleRecord {
                x0_sample: x0,
                chi: aug.x,
                f: aug.f,
                lambda_x: 0.0,
                dist: 0.0,
                cap_radius: 0.0,
            })
        })
        .collect()
}

fn refresh_statistics(pool: &mut [SampleRecord], center: &DVector<f64>) {
    pool.par_iter_mut().for_each(|rec| {
        rec.lambda_x = rec.f.singular_values().max();
        rec.dist = (&rec.chi - center).norm();
    });
}

pub fn gotube_run(cfg: &StochasticConfig) -> Result<StochasticRun> {
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

    let mut steps = Vec::new();
    let mut diagnostics = Vec::new();
    let mut center = cfg.x0.clone();
    let mut pool: Vec<SampleRecord> = Vec::new();
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

        // Existing samples continue from their previous state.
        let advanced: Result<Vec<(DVector<f64>, nalgebra::DMatrix<f64>)>> = pool
            .par_iter()
            .map(|rec| {
                let aug = solve_augmented_from(
                    field.as_ref(),
                    &AugmentedState {
                        x: rec.chi.clone(),
                        f: rec.f.clone(),
                    },
                    (t_prev, t),
                    &cfg.integrator,
                )?;
                Ok((aug.x, aug.f))
            })
            .collect();
        for (rec, (chi, f)) in pool.iter_mut().zip(advanced?) {
            rec.chi = chi;
            rec.f = f;
        }

        // Confidence loop: add batches until the caps cover the surface.
        let (confidence, stats_dl);
        loop {
            if pool.len() < 3 {
                let want = cfg.batch_size.max(3 - pool.len());
                let batch = fresh_batch(field.as_ref(), cfg, t, next_index, want)?;
                next_index += want as u64;
                pool.extend(batch);
            }
            refresh_statistics(&mut pool, &center);
            if pool.iter().any(|r| !r.dist.is_finite() || !r.lambda_x.is_finite()) {
                return Err(ReachError::Blowup { t });
            }
            let m_bar = pool.iter().map(|r| r.dist).fold(0.0, f64::max);
            let stats = delta_lambda(&pool, cfg.gamma)?;
            for rec in pool.iter_mut() {
                rec.cap_radius =
                    cap_radius_gotube(rec.lambda_x, stats.delta_lambda, cfg.mu, m_bar, rec.dist)?;
            }
            let radii: Vec<f64> = pool.iter().map(|r| r.cap_radius).collect();
            let p_bar = compute_probability(&radii, n, cfg.delta0)?;
            if p_bar >= target {
                confidence = p_bar;
                stats_dl = stats.delta_lambda;
                break;
            }
            if pool.len() >= cfg.max_samples {
                return Ok(StochasticRun {
                    steps,
                    diagnostics,
                    timeout: Some(ConfidenceTimeout {
                        achieved: p_bar,
                        target,
                        samples: pool.len(),
                    }),
                });
            }
            let want = cfg.batch_size.min(cfg.max_samples - pool.len());
            let batch = fresh_batch(field.as_ref(), cfg, t, next_index, want)?;
            next_index += want as u64;
            pool.extend(batch);
        }

        let m_bar = pool.iter().map(|r| r.dist).fold(0.0, f64::max);
        let r_min = pool.iter().map(|r| r.cap_radius).fold(f64::INFINITY, f64::min);
        let r_max = pool.iter().map(|r| r.cap_radius).fold(0.0, f64::max);
        steps.push(StochasticStep {
            time: t,
            center: center.clone(),
            radius: cfg.mu * m_bar,
            m_bar,
            achieved_confidence: confidence,
            samples_used: pool.len(),
        });
        diagnostics.push(StepDiagnostics {
            time: t,
            delta_lambda: stats_dl,
            r_min,
            r_max,
            samples_used: pool.len(),
        });
    }

    Ok(StochasticRun {
        steps,
        diagnostics,
        timeout: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{IntegratorConfig, ModelParams};
    use crate::stochastic::StochasticEngine;

    fn base_cfg(model: &str, params: ModelParams, x0: Vec<f64>) -> StochasticConfig {
        StochasticConfig {
            model: model.into(),
            params,
            x0: DVector::from_vec(x0),
            delta0: 0.1,
            time_horizon: 1.0,
            dt: 0.1,
            mu: 3.0,
            gamma: 0.05,
            batch_size: 16,
            max_samples: 4096,
            rng_seed: 1,
            engine: StochasticEngine::GoTube,
            integrator: IntegratorConfig::default(),
        }
    }

    fn zero_params(n: usize) -> ModelParams {
        let mut p = ModelParams::new();
        p.matrix("A", vec![vec![0.0; n]; n]).vector("c", vec![0.0; n]);
        p
    }

    #[test]
    fn zero_field_emits_the_scaled_initial_ball() {
        let cfg = base_cfg("linear", zero_params(2), vec![1.0, -1.0]);
        let run = gotube_run(&cfg).unwrap();
        assert!(run.timeout.is_none());
        assert_eq!(run.steps.len(), 10);
        for step in &run.steps {
            assert!((step.m_bar - cfg.delta0).abs() <= 1e-12);
            assert_eq!(step.radius, cfg.mu * step.m_bar);
            assert!(step.achieved_confidence >= 1.0 - cfg.gamma);
            // mu = 3 turns every cap into the full sphere: one batch suffices.
            assert_eq!(step.samples_used, cfg.batch_size);
        }
    }

    #[test]
    fn contractive_linear_matches_the_closed_form() {
        let mut p = ModelParams::new();
        p.matrix("A", vec![vec![-1.0, 0.0], vec![0.0, -1.0]])
            .vector("c", vec![0.0, 0.0]);
        let cfg = base_cfg("linear", p, vec![0.5, 0.5]);
        let run = gotube_run(&cfg).unwrap();
        assert!(run.timeout.is_none());
        for step in &run.steps {
            let want = cfg.mu * cfg.delta0 * (-step.time).exp();
            assert!(
                (step.radius - want).abs() <= want * 1e-6,
                "t = {}: {} vs {}",
                step.time,
                step.radius,
                want
            );
        }
    }

    #[test]
    fn radius_identity_and_diagnostics() {
        let mut cfg = base_cfg("brusselator", ModelParams::new(), vec![1.0, 1.0]);
        cfg.mu = 1.5;
        cfg.time_horizon = 0.5;
        cfg.dt = 0.1;
        let run = gotube_run(&cfg).unwrap();
        assert!(run.timeout.is_none());
        assert_eq!(run.steps.len(), run.diagnostics.len());
        for (s, d) in run.steps.iter().zip(&run.diagnostics) {
            assert_eq!(s.radius, cfg.mu * s.m_bar);
            assert_eq!(s.samples_used, d.samples_used);
            assert!(d.r_min >= 0.0 && d.r_max >= d.r_min);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = base_cfg("vanderpol", ModelParams::new(), vec![1.0, 0.5]);
        cfg.mu = 1.3;
        cfg.time_horizon = 0.4;
        cfg.dt = 0.2;
        let a = gotube_run(&cfg).unwrap();
        let b = gotube_run(&cfg).unwrap();
        assert_eq!(a.steps.len(), b.steps.len());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.radius, y.radius);
            assert_eq!(x.samples_used, y.samples_used);
            assert_eq!(x.achieved_confidence, y.achieved_confidence);
        }
    }

    #[test]
    fn tight_mu_with_tiny_budget_times_out() {
        let mut cfg = base_cfg("vanderpol", ModelParams::new(), vec![1.0, 0.5]);
        cfg.mu = 1.0 + 1e-6;
        cfg.gamma = 1e-6;
        cfg.batch_size = 4;
        cfg.max_samples = 8;
        let run = gotube_run(&cfg).unwrap();
        let timeout = run.timeout.expect("expected a confidence timeout");
        assert!(timeout.achieved < timeout.target);
        assert!(timeout.samples <= cfg.max_samples);
    }

    #[test]
    fn own_samples_stay_within_radius_over_mu() {
        let mut cfg = base_cfg("brusselator", ModelParams::new(), vec![1.0, 1.0]);
        cfg.mu = 1.2;
        cfg.time_horizon = 1.0;
        cfg.dt = 0.1;
        let run = gotube_run(&cfg).unwrap();
        // m_bar is a max over samples, so radius/mu = m_bar >= every distance;
        // re-check with a fresh integration of fresh samples against radius.
        let field = model_registry(&cfg.model, &cfg.params).unwrap();
        let xs = crate::geometry::sample_sphere_surface(
            2, &cfg.x0, cfg.delta0, 200, 31415,
        )
        .unwrap();
        let mut center = cfg.x0.clone();
        let mut states = xs;
        let mut t_prev = 0.0;
        for step in &run.steps {
            center =
                solve_ivp(field.as_ref(), &center, (t_prev, step.time), &cfg.integrator).unwrap();
            for x in states.iter_mut() {
                *x = solve_ivp(field.as_ref(), x, (t_prev, step.time), &cfg.integrator).unwrap();
            }
            t_prev = step.time;
            let worst = states
                .iter()
                .map(|x| (x - &center).norm())
                .fold(0.0, f64::max);
            assert!(
                worst <= step.radius,
                "t = {}: fresh max {worst} vs radius {}",
                step.time,
                step.radius
            );
        }
    }
}
