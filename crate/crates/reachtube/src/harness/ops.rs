//! Run orchestration, audits, comparisons, and Pareto sweeps.

use super::artifact::{StepRecord, TubeArtifact};
use super::config::{EngineKind, RunConfig};
use crate::error::{ReachError, Result};
use crate::geometry::{sample_sphere_surface, BoxSet, Ellipsoid, Metric};
use crate::interval::{IMatrix, IVector, Interval};
use crate::lrtng::{conservativeness_audit, LrtngStep};
use crate::ode::{model_registry, solve_ivp};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Run the configured engine and package the result. The artifact may be
/// partial: a blowup or confidence timeout is recorded in its metadata and
/// should map to a nonzero exit code.
pub fn run_engine(cfg: &RunConfig) -> Result<TubeArtifact> {
    let start = Instant::now();
    match cfg.engine_kind() {
        EngineKind::Lrtng => {
            let run = crate::lrtng::lrtng_run(&cfg.lrtng_config()?)?;
            Ok(TubeArtifact::from_lrtng(
                &run,
                cfg,
                start.elapsed().as_secs_f64(),
            ))
        }
        EngineKind::Gotube => {
            let run = crate::stochastic::gotube_run(&cfg.stochastic_config()?)?;
            Ok(TubeArtifact::from_stochastic(
                &run,
                cfg,
                start.elapsed().as_secs_f64(),
            ))
        }
        EngineKind::Slr => {
            let run = crate::stochastic::slr_run(&cfg.stochastic_config()?)?;
            Ok(TubeArtifact::from_stochastic(
                &run,
                cfg,
                start.elapsed().as_secs_f64(),
            ))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditOutcome {
    pub trials: usize,
    pub steps_checked: usize,
    pub violations: usize,
    pub clean: bool,
}

fn lrtng_steps_from_records(steps: &[StepRecord]) -> Result<Vec<LrtngStep>> {
    steps
        .iter()
        .map(|s| {
            let r = match s {
                StepRecord::Lrtng(r) => r,
                StepRecord::Stochastic(_) => {
                    return Err(ReachError::Config(
                        "artifact mixes engine record kinds".into(),
                    ))
                }
            };
            let n = r.center.len();
            let m = DMatrix::from_row_slice(n, n, &r.metric_m);
            let center = DVector::from_vec(r.center.clone());
            let ellipsoid = Ellipsoid::new(center.clone(), Metric::from_m(m)?, r.ell_radius)?;
            let euclid_ball = Ellipsoid::euclidean_ball(center.clone(), r.euclid_radius)?;
            let comps: Result<Vec<Interval>> = r
                .box_lo
                .iter()
                .zip(&r.box_hi)
                .map(|(&lo, &hi)| Interval::new(lo, hi))
                .collect();
            Ok(LrtngStep {
                time: r.time,
                center,
                ellipsoid,
                euclid_ball,
                box_set: BoxSet::new(IVector::new(comps?)?),
                gradient_enclosure: IMatrix::identity(n),
            })
        })
        .collect()
}

/// Fresh-sample containment audit of a stored tube against its config.
pub fn audit(
    artifact: &TubeArtifact,
    cfg: &RunConfig,
    trials: usize,
    seed: u64,
) -> Result<AuditOutcome> {
    if artifact.metadata.config_hash != cfg.config_hash() {
        return Err(ReachError::Config(
            "artifact was produced from a different configuration".into(),
        ));
    }
    match artifact.metadata.engine {
        EngineKind::Lrtng => {
            let steps = lrtng_steps_from_records(&artifact.steps)?;
            let report = conservativeness_audit(&steps, &cfg.lrtng_config()?, trials, seed)?;
            Ok(AuditOutcome {
                trials,
                steps_checked: steps.len(),
                violations: report.total_violations(),
                clean: report.is_clean(),
            })
        }
        EngineKind::Gotube | EngineKind::Slr => {
            let scfg = cfg.stochastic_config()?;
            let field = model_registry(&scfg.model, &scfg.params)?;
            let n = field.dim();
            let mut states =
                sample_sphere_surface(n, &scfg.x0, scfg.delta0, trials, seed)?;
            let mut center = scfg.x0.clone();
            let mut t_prev = 0.0;
            let mut violations = 0usize;
            for step in &artifact.steps {
                let r = match step {
                    StepRecord::Stochastic(r) => r,
                    StepRecord::Lrtng(_) => {
                        return Err(ReachError::Config(
                            "artifact mixes engine record kinds".into(),
                        ))
                    }
                };
                center = solve_ivp(field.as_ref(), &center, (t_prev, r.time), &scfg.integrator)?;
                for x in states.iter_mut() {
                    *x = solve_ivp(field.as_ref(), x, (t_prev, r.time), &scfg.integrator)?;
                }
                t_prev = r.time;
                let worst = states
                    .iter()
                    .map(|x| (x - &center).norm())
                    .fold(0.0, f64::max);
                if worst > r.radius {
                    violations += 1;
                }
            }
            Ok(AuditOutcome {
                trials,
                steps_checked: artifact.steps.len(),
                violations,
                clean: violations == 0,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub engine: String,
    pub path: String,
    /// `None` renders as "Blowup" (non-finite values or early stop).
    pub mean_volume: Option<f64>,
    pub runtime_seconds: f64,
    pub final_time: f64,
    pub smallest: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareTable {
    pub comparison_key: String,
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("comparison: {}\n", self.comparison_key));
        out.push_str(&format!(
            "{:<10} {:>14} {:>12} {:>10}  {}\n",
            "engine", "mean volume", "runtime [s]", "final t", "artifact"
        ));
        for row in &self.rows {
            let vol = match row.mean_volume {
                Some(v) => format!("{v:.6e}{}", if row.smallest { " *" } else { "" }),
                None => "Blowup".into(),
            };
            out.push_str(&format!(
                "{:<10} {:>14} {:>12.3} {:>10.3}  {}\n",
                row.engine, vol, row.runtime_seconds, row.final_time, row.path
            ));
        }
        out
    }
}

/// Volume/runtime comparison across artifacts over the same setting.
pub fn compare(paths: &[&Path]) -> Result<CompareTable> {
    if paths.len() < 2 {
        return Err(ReachError::InvalidInput(
            "compare needs at least two artifacts".into(),
        ));
    }
    let artifacts: Result<Vec<TubeArtifact>> =
        paths.iter().map(|p| TubeArtifact::read(p)).collect();
    let artifacts = artifacts?;
    let key = &artifacts[0].metadata.comparison_key;
    for (a, p) in artifacts.iter().zip(paths) {
        if &a.metadata.comparison_key != key {
            return Err(ReachError::Config(format!(
                "artifact {} covers a different setting:\n  expected: {key}\n  found:    {}",
                p.display(),
                a.metadata.comparison_key
            )));
        }
    }
    let mut rows: Vec<CompareRow> = artifacts
        .iter()
        .zip(paths)
        .map(|(a, p)| {
            let blown = a.metadata.blowup_time.is_some()
                || a.metadata.final_time + 1e-9 < a.metadata.time_horizon
                || !a.metadata.mean_volume.is_finite();
            CompareRow {
                engine: a.metadata.engine.to_string(),
                path: p.display().to_string(),
                mean_volume: (!blown).then_some(a.metadata.mean_volume),
                runtime_seconds: a.metadata.runtime_seconds,
                final_time: a.metadata.final_time,
                smallest: false,
            }
        })
        .collect();
    let best = rows
        .iter()
        .filter_map(|r| r.mean_volume)
        .fold(f64::INFINITY, f64::min);
    for row in rows.iter_mut() {
        if let Some(v) = row.mean_volume {
            row.smallest = v <= best * (1.0 + 1e-12);
        }
    }
    Ok(CompareTable {
        comparison_key: key.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub mu: f64,
    /// Median over the seed family.
    pub runtime_seconds: f64,
    pub mean_volume: f64,
    /// Volume divided by the lowest-mu volume.
    pub normalized_volume: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sweep the tightness factor over a seed family: per mu, the median runtime
/// and volume across seeds, volumes normalized by the lowest mu's.
pub fn pareto(template: &RunConfig, mu_list: &[f64], seeds: &[u64]) -> Result<Vec<ParetoPoint>> {
    if mu_list.is_empty() || seeds.is_empty() {
        return Err(ReachError::InvalidInput(
            "pareto needs at least one mu and one seed".into(),
        ));
    }
    if mu_list.windows(2).any(|w| w[0] >= w[1]) || mu_list.iter().any(|&m| m <= 1.0) {
        return Err(ReachError::InvalidInput(
            "mu values must exceed 1 and be strictly ascending".into(),
        ));
    }
    let mut points = Vec::new();
    for &mu in mu_list {
        let mut runtimes = Vec::new();
        let mut volumes = Vec::new();
        for &seed in seeds {
            let mut cfg = template.clone();
            cfg.set_mu(mu);
            cfg.set_seed(seed);
            let art = run_engine(&cfg)?;
            if art.metadata.timeout.is_some() {
                return Err(ReachError::ConfidenceTimeout {
                    achieved: art.metadata.timeout.as_ref().unwrap().achieved,
                    target: art.metadata.timeout.as_ref().unwrap().target,
                    samples: art.metadata.timeout.as_ref().unwrap().samples,
                });
            }
            runtimes.push(art.metadata.runtime_seconds);
            volumes.push(art.metadata.mean_volume);
        }
        points.push(ParetoPoint {
            mu,
            runtime_seconds: median(runtimes),
            mean_volume: median(volumes),
            normalized_volume: 0.0,
        });
    }
    let base = points[0].mean_volume;
    for p in points.iter_mut() {
        p.normalized_volume = p.mean_volume / base;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_str_at(text, Path::new(".")).unwrap()
    }

    const GOTUBE_TOY: &str = r#"
[model]
name = "linear"

[model.params]
A = [[0.0, 0.0], [0.0, 0.0]]
c = [0.0, 0.0]

[initial_set]
x0 = [0.0, 0.0]
delta0 = 0.1

[engine]
kind = "gotube"
time_horizon = 0.3
dt = 0.1
mu = 3.0
gamma = 0.05
batch_size = 8
max_samples = 256
"#;

    #[test]
    fn gotube_audit_is_clean_on_a_sound_run() {
        // Zero linear field: the tube is exact and the audit must pass.
        let c = cfg(GOTUBE_TOY);
        let art = run_engine(&c).unwrap();
        let out = audit(&art, &c, 200, 99).unwrap();
        assert!(out.clean);
        assert_eq!(out.steps_checked, 3);
    }

    #[test]
    fn audit_rejects_mismatched_config() {
        let c = cfg(GOTUBE_TOY);
        let art = run_engine(&c).unwrap();
        let other = cfg(&GOTUBE_TOY.replace("0.1", "0.2"));
        assert!(audit(&art, &other, 10, 1).is_err());
    }

    #[test]
    fn compare_flags_ties_and_smallest() {
        let c = cfg(GOTUBE_TOY);
        let art = run_engine(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = art.write(dir.path(), "a").unwrap();
        let p2 = art.write(dir.path(), "b").unwrap();
        let table = compare(&[p1.as_path(), p2.as_path()]).unwrap();
        assert!(table.rows.iter().all(|r| r.smallest));
        assert!(table.render_text().contains("*"));
    }

    #[test]
    fn compare_refuses_different_settings() {
        let c = cfg(GOTUBE_TOY);
        let art = run_engine(&c).unwrap();
        let c2 = cfg(&GOTUBE_TOY.replace("delta0 = 0.1", "delta0 = 0.2"));
        let art2 = run_engine(&c2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = art.write(dir.path(), "a").unwrap();
        let p2 = art2.write(dir.path(), "b").unwrap();
        assert!(compare(&[p1.as_path(), p2.as_path()]).is_err());
    }

    #[test]
    fn pareto_normalizes_by_lowest_mu() {
        let c = cfg(GOTUBE_TOY);
        let points = pareto(&c, &[1.5, 2.0], &[1, 2, 3]).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].normalized_volume, 1.0);
        assert!(points[1].normalized_volume >= 1.0);
    }

    #[test]
    fn pareto_rejects_bad_mu_lists() {
        let c = cfg(GOTUBE_TOY);
        assert!(pareto(&c, &[2.0, 1.5], &[1]).is_err());
        assert!(pareto(&c, &[0.9], &[1]).is_err());
    }
}
