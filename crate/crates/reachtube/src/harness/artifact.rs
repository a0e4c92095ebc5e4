//! Tube persistence: line-delimited step records plus a summary sidecar.
//!
//! The `.tube` file holds one JSON record per timestep so arbitrarily long
//! runs stream instead of buffering; the `.summary` file aggregates volumes
//! and run metadata. A `.csv` export carries (t, center…, radius/volume) for
//! external tooling. Every float survives the write/read round trip exactly.

use super::config::{EngineKind, RunConfig};
use crate::error::{ReachError, Result};
use crate::geometry::ellipsoid_volume;
use crate::lrtng::LrtngRun;
use crate::stochastic::StochasticRun;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtngRecord {
    pub time: f64,
    pub center: Vec<f64>,
    /// Row-major metric matrix of the step's ellipsoid.
    pub metric_m: Vec<f64>,
    pub ell_radius: f64,
    pub euclid_radius: f64,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    /// Intersection-box volume (the reported convention for this engine).
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticRecord {
    pub time: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub m_bar: f64,
    pub achieved_confidence: f64,
    pub samples_used: usize,
    pub delta_lambda: f64,
    /// Cap radii clamped at the antipodal chord (a full-sphere cap).
    pub r_min: f64,
    pub r_max: f64,
    /// Euclidean-ball volume (the reported convention for this engine).
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepRecord {
    Lrtng(LrtngRecord),
    Stochastic(StochasticRecord),
}

impl StepRecord {
    pub fn time(&self) -> f64 {
        match self {
            StepRecord::Lrtng(r) => r.time,
            StepRecord::Stochastic(r) => r.time,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            StepRecord::Lrtng(r) => r.volume,
            StepRecord::Stochastic(r) => r.volume,
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            StepRecord::Lrtng(r) => &r.center,
            StepRecord::Stochastic(r) => &r.center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeoutInfo {
    pub achieved: f64,
    pub target: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub config_hash: String,
    pub engine: EngineKind,
    pub version: String,
    pub model: String,
    pub comparison_key: String,
    pub delta0: f64,
    pub time_horizon: f64,
    pub dt: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Which set's volume the summary reports: "box" or "ball".
    pub volume_convention: String,
    /// Wall-clock runtime; excluded from determinism comparisons.
    pub runtime_seconds: f64,
    pub mean_volume: f64,
    pub final_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout: Option<TimeoutInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeArtifact {
    pub metadata: ArtifactMetadata,
    pub steps: Vec<StepRecord>,
}

fn mean_volume(steps: &[StepRecord]) -> f64 {
    if steps.is_empty() {
        return 0.0;
    }
    steps.iter().map(|s| s.volume()).sum::<f64>() / steps.len() as f64
}

impl TubeArtifact {
    pub fn from_lrtng(run: &LrtngRun, cfg: &RunConfig, runtime_seconds: f64) -> Self {
        let steps: Vec<StepRecord> = run
            .steps
            .iter()
            .map(|s| {
                let n = s.center.len();
                StepRecord::Lrtng(LrtngRecord {
                    time: s.time,
                    center: s.center.iter().cloned().collect(),
                    metric_m: (0..n)
                        .flat_map(|i| (0..n).map(move |j| (i, j)))
                        .map(|(i, j)| s.ellipsoid.metric.m()[(i, j)])
                        .collect(),
                    ell_radius: s.ellipsoid.radius,
                    euclid_radius: s.euclid_ball.radius,
                    box_lo: s.box_set.intervals.iter().map(|iv| iv.lo()).collect(),
                    box_hi: s.box_set.intervals.iter().map(|iv| iv.hi()).collect(),
                    volume: s.box_set.volume(),
                })
            })
            .collect();
        let final_time = steps.last().map(|s| s.time()).unwrap_or(0.0);
        TubeArtifact {
            metadata: ArtifactMetadata {
                config_hash: cfg.config_hash(),
                engine: EngineKind::Lrtng,
                version: env!("CARGO_PKG_VERSION").to_string(),
                model: cfg.model_name().to_string(),
                comparison_key: cfg.comparison_key(),
                delta0: cfg.delta0(),
                time_horizon: cfg.time_horizon(),
                dt: cfg.dt(),
                seed: cfg.seed(),
                mu: None,
                volume_convention: "box".into(),
                runtime_seconds,
                mean_volume: mean_volume(&steps),
                final_time,
                blowup_time: run.blowup_time,
                timeout: None,
            },
            steps,
        }
    }

    pub fn from_stochastic(run: &StochasticRun, cfg: &RunConfig, runtime_seconds: f64) -> Self {
        let n = cfg.x0().len();
        let clamp = 2.0 * cfg.delta0();
        let steps: Vec<StepRecord> = run
            .steps
            .iter()
            .zip(&run.diagnostics)
            .map(|(s, d)| {
                let ball = crate::geometry::Ellipsoid::euclidean_ball(
                    s.center.clone(),
                    s.radius,
                )
                .expect("emitted radius is finite and nonnegative");
                let _ = n;
                StepRecord::Stochastic(StochasticRecord {
                    time: s.time,
                    center: s.center.iter().cloned().collect(),
                    radius: s.radius,
                    m_bar: s.m_bar,
                    achieved_confidence: s.achieved_confidence,
                    samples_used: s.samples_used,
                    delta_lambda: d.delta_lambda,
                    r_min: d.r_min.min(clamp),
                    r_max: d.r_max.min(clamp),
                    volume: ellipsoid_volume(&ball),
                })
            })
            .collect();
        let final_time = steps.last().map(|s| s.time()).unwrap_or(0.0);
        TubeArtifact {
            metadata: ArtifactMetadata {
                config_hash: cfg.config_hash(),
                engine: cfg.engine_kind(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                model: cfg.model_name().to_string(),
                comparison_key: cfg.comparison_key(),
                delta0: cfg.delta0(),
                time_horizon: cfg.time_horizon(),
                dt: cfg.dt(),
                seed: cfg.seed(),
                mu: cfg.mu(),
                volume_convention: "ball".into(),
                runtime_seconds,
                mean_volume: mean_volume(&steps),
                final_time,
                blowup_time: None,
                timeout: run.timeout.as_ref().map(|t| TimeoutInfo {
                    achieved: t.achieved,
                    target: t.target,
                    samples: t.samples,
                }),
            },
            steps,
        }
    }

    pub fn tube_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.tube"))
    }

    /// Write `<name>.tube`, `<name>.summary`, and `<name>.csv` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let tube_path = Self::tube_path(dir, name);
        let mut tube = std::io::BufWriter::new(std::fs::File::create(&tube_path)?);
        for step in &self.steps {
            serde_json::to_writer(&mut tube, step)
                .map_err(|e| ReachError::Config(format!("serializing step: {e}")))?;
            tube.write_all(b"\n")?;
        }
        tube.flush()?;

        let summary = serde_json::to_string_pretty(&self.metadata)
            .map_err(|e| ReachError::Config(format!("serializing summary: {e}")))?;
        std::fs::write(dir.join(format!("{name}.summary")), summary + "\n")?;

        let mut csv = String::new();
        let dim = self.steps.first().map(|s| s.center().len()).unwrap_or(0);
        csv.push_str("t,");
        for i in 0..dim {
            csv.push_str(&format!("center_{i},"));
        }
        csv.push_str("radius_or_volume\n");
        for step in &self.steps {
            csv.push_str(&format!("{:.17e},", step.time()));
            for c in step.center() {
                csv.push_str(&format!("{c:.17e},"));
            }
            let tail = match step {
                StepRecord::Lrtng(r) => r.volume,
                StepRecord::Stochastic(r) => r.radius,
            };
            csv.push_str(&format!("{tail:.17e}\n"));
        }
        std::fs::write(dir.join(format!("{name}.csv")), csv)?;
        Ok(tube_path)
    }

    /// Read an artifact back from its `.tube` path (the `.summary` sidecar
    /// must sit next to it).
    pub fn read(tube_path: &Path) -> Result<Self> {
        let summary_path = tube_path.with_extension("summary");
        let summary = std::fs::read_to_string(&summary_path)?;
        let metadata: ArtifactMetadata = serde_json::from_str(&summary)
            .map_err(|e| ReachError::Config(format!("{}: {e}", summary_path.display())))?;
        let file = std::fs::File::open(tube_path)?;
        let mut steps = Vec::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step: StepRecord = serde_json::from_str(&line).map_err(|e| {
                ReachError::Config(format!(
                    "{} line {}: {e}",
                    tube_path.display(),
                    lineno + 1
                ))
            })?;
            steps.push(step);
        }
        Ok(TubeArtifact { metadata, steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::ModelParams;

    fn toy_cfg() -> RunConfig {
        RunConfig::from_str_at(
            r#"
[model]
name = "brusselator"

[initial_set]
x0 = [1.0, 1.0]
delta0 = 0.01

[engine]
kind = "lrtng"
time_horizon = 0.2
dt = 0.05
"#,
            Path::new("."),
        )
        .unwrap()
    }

    #[test]
    fn lrtng_round_trip_is_exact() {
        let cfg = toy_cfg();
        let run = crate::lrtng::lrtng_run(&cfg.lrtng_config().unwrap()).unwrap();
        let art = TubeArtifact::from_lrtng(&run, &cfg, 0.12);
        let dir = tempfile::tempdir().unwrap();
        let path = art.write(dir.path(), "toy").unwrap();
        let back = TubeArtifact::read(&path).unwrap();
        assert_eq!(art, back);
    }

    #[test]
    fn stochastic_round_trip_is_exact() {
        let mut p = ModelParams::new();
        p.matrix("A", vec![vec![-1.0, 0.0], vec![0.0, -1.0]])
            .vector("c", vec![0.0, 0.0]);
        let cfg = RunConfig::from_str_at(
            r#"
[model]
name = "vanderpol"

[initial_set]
x0 = [1.0, 0.5]
delta0 = 0.05

[engine]
kind = "gotube"
time_horizon = 0.2
dt = 0.1
mu = 2.0
gamma = 0.05
batch_size = 8
max_samples = 512
"#,
            Path::new("."),
        )
        .unwrap();
        let run = crate::stochastic::gotube_run(&cfg.stochastic_config().unwrap()).unwrap();
        let art = TubeArtifact::from_stochastic(&run, &cfg, 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = art.write(dir.path(), "toy").unwrap();
        let back = TubeArtifact::read(&path).unwrap();
        assert_eq!(art, back);
        assert!(dir.path().join("toy.csv").is_file());
        assert_eq!(back.metadata.volume_convention, "ball");
    }
}
