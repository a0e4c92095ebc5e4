//! Run configuration: TOML ingestion, validation, and a canonical hash.

use crate::error::{ReachError, Result};
use crate::ode::{IntegratorConfig, ModelParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Lrtng,
    Gotube,
    Slr,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineKind::Lrtng => write!(f, "lrtng"),
            EngineKind::Gotube => write!(f, "gotube"),
            EngineKind::Slr => write!(f, "slr"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelSection {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    /// Scalars, vectors (arrays), or matrices (arrays of arrays).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, toml::Value>,
}

fn toml_number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InitialSetSection {
    x0: Vec<f64>,
    delta0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EngineSection {
    kind: EngineKind,
    time_horizon: f64,
    dt: f64,
    #[serde(default)]
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_samples: Option<usize>,
    #[serde(default = "default_integrator")]
    integrator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
}

fn default_integrator() -> String {
    "rk45".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct OutputSection {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawConfig {
    model: ModelSection,
    initial_set: InitialSetSection,
    engine: EngineSection,
    #[serde(default)]
    output: OutputSection,
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    raw: RawConfig,
    /// Directory the config file lives in; relative paths resolve against it.
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: RawConfig = toml::from_str(&text)
            .map_err(|e| ReachError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let cfg = Self { raw, base_dir };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str_at(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ReachError::Config(e.to_string()))?;
        let cfg = Self {
            raw,
            base_dir: base_dir.to_path_buf(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let e = &self.raw.engine;
        if matches!(e.kind, EngineKind::Gotube | EngineKind::Slr) {
            for (field, missing) in [
                ("mu", e.mu.is_none()),
                ("gamma", e.gamma.is_none()),
                ("batch_size", e.batch_size.is_none()),
                ("max_samples", e.max_samples.is_none()),
            ] {
                if missing {
                    return Err(ReachError::Config(format!(
                        "engine '{}' requires field '{field}'",
                        e.kind
                    )));
                }
            }
        }
        if let Some(w) = &self.raw.model.weights {
            let p = self.resolve(w);
            if !p.is_file() {
                return Err(ReachError::Config(format!(
                    "weights file not found: {}",
                    p.display()
                )));
            }
        }
        if self.raw.initial_set.x0.is_empty() {
            return Err(ReachError::Config("x0 must be non-empty".into()));
        }
        Ok(())
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn engine_kind(&self) -> EngineKind {
        self.raw.engine.kind
    }

    pub fn model_name(&self) -> &str {
        &self.raw.model.name
    }

    pub fn seed(&self) -> u64 {
        self.raw.engine.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.raw.engine.seed = seed;
    }

    pub fn set_mu(&mut self, mu: f64) {
        self.raw.engine.mu = Some(mu);
    }

    pub fn mu(&self) -> Option<f64> {
        self.raw.engine.mu
    }

    pub fn x0(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_vec(self.raw.initial_set.x0.clone())
    }

    pub fn delta0(&self) -> f64 {
        self.raw.initial_set.delta0
    }

    pub fn time_horizon(&self) -> f64 {
        self.raw.engine.time_horizon
    }

    pub fn dt(&self) -> f64 {
        self.raw.engine.dt
    }

    pub fn output_name(&self) -> String {
        self.raw
            .output
            .name
            .clone()
            .unwrap_or_else(|| format!("{}_{}", self.raw.model.name, self.raw.engine.kind))
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.raw.output.dir.as_ref().map(|d| self.resolve(d))
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let mut params = ModelParams::new();
        for (k, v) in &self.raw.model.params {
            if let Some(x) = toml_number(v) {
                params.scalar(k, x);
                continue;
            }
            if let toml::Value::Array(items) = v {
                if let Some(vec) = items
                    .iter()
                    .map(toml_number)
                    .collect::<Option<Vec<f64>>>()
                {
                    params.vector(k, vec);
                    continue;
                }
                if let Some(rows) = items
                    .iter()
                    .map(|row| match row {
                        toml::Value::Array(cells) => {
                            cells.iter().map(toml_number).collect::<Option<Vec<f64>>>()
                        }
                        _ => None,
                    })
                    .collect::<Option<Vec<Vec<f64>>>>()
                {
                    params.matrix(k, rows);
                    continue;
                }
            }
            return Err(ReachError::Config(format!(
                "model parameter '{k}' must be a number, an array of numbers, \
                 or an array of arrays of numbers"
            )));
        }
        if let Some(w) = &self.raw.model.weights {
            params.string("weights", self.resolve(w).to_string_lossy().as_ref());
        }
        Ok(params)
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        let e = &self.raw.engine;
        match e.integrator.as_str() {
            "rk45" => Ok(IntegratorConfig::rk45_adaptive(
                e.rtol.unwrap_or(1e-9),
                e.atol.unwrap_or(1e-9),
            )),
            "rk4" => Ok(IntegratorConfig::rk4_fixed(e.step.unwrap_or(0.01))),
            other => Err(ReachError::Config(format!(
                "unknown integrator '{other}' (expected 'rk45' or 'rk4')"
            ))),
        }
    }

    pub fn lrtng_config(&self) -> Result<crate::lrtng::LrtngConfig> {
        Ok(crate::lrtng::LrtngConfig {
            model: self.raw.model.name.clone(),
            params: self.model_params()?,
            x0: self.x0(),
            delta0: self.raw.initial_set.delta0,
            metric0: None,
            time_horizon: self.raw.engine.time_horizon,
            dt: self.raw.engine.dt,
            integrator: self.integrator()?,
        })
    }

    pub fn stochastic_config(&self) -> Result<crate::stochastic::StochasticConfig> {
        let e = &self.raw.engine;
        let engine = match e.kind {
            EngineKind::Gotube => crate::stochastic::StochasticEngine::GoTube,
            EngineKind::Slr => crate::stochastic::StochasticEngine::Slr,
            EngineKind::Lrtng => {
                return Err(ReachError::Config(
                    "lrtng engine has no stochastic configuration".into(),
                ))
            }
        };
        Ok(crate::stochastic::StochasticConfig {
            model: self.raw.model.name.clone(),
            params: self.model_params()?,
            x0: self.x0(),
            delta0: self.raw.initial_set.delta0,
            time_horizon: e.time_horizon,
            dt: e.dt,
            mu: e.mu.unwrap(),
            gamma: e.gamma.unwrap(),
            batch_size: e.batch_size.unwrap(),
            max_samples: e.max_samples.unwrap(),
            rng_seed: e.seed,
            engine,
            integrator: self.integrator()?,
        })
    }

    /// Hash of the canonical (parsed) configuration: key order in the file
    /// does not matter, output paths do not enter the hash.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.raw.clone();
        canonical.output = OutputSection::default();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Fields shared by tube comparisons; artifacts over different settings
    /// must not be compared.
    pub fn comparison_key(&self) -> String {
        format!(
            "{}|{:?}|{}|{}",
            self.raw.model.name,
            self.raw.initial_set.x0,
            self.raw.initial_set.delta0,
            self.raw.engine.time_horizon
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
name = "brusselator"

[initial_set]
x0 = [1.0, 1.0]
delta0 = 0.01

[engine]
kind = "lrtng"
time_horizon = 1.0
dt = 0.02
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::from_str_at(BASE, Path::new(".")).unwrap();
        assert_eq!(cfg.engine_kind(), EngineKind::Lrtng);
        assert_eq!(cfg.seed(), 0);
        assert_eq!(cfg.output_name(), "brusselator_lrtng");
        cfg.lrtng_config().unwrap();
    }

    #[test]
    fn stochastic_fields_are_required() {
        let text = BASE.replace("kind = \"lrtng\"", "kind = \"gotube\"");
        let err = RunConfig::from_str_at(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
    }

    #[test]
    fn hash_ignores_key_order_and_output() {
        let a = RunConfig::from_str_at(BASE, Path::new(".")).unwrap();
        let reordered = r#"
[engine]
dt = 0.02
time_horizon = 1.0
kind = "lrtng"

[initial_set]
delta0 = 0.01
x0 = [1.0, 1.0]

[model]
name = "brusselator"

[output]
name = "elsewhere"
"#;
        let b = RunConfig::from_str_at(reordered, Path::new(".")).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());

        let c = RunConfig::from_str_at(&BASE.replace("0.01", "0.02"), Path::new(".")).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn missing_weights_file_is_a_parse_error() {
        let text = BASE.replace(
            "name = \"brusselator\"",
            "name = \"ctrnn\"\nweights = \"no_such_file.toml\"",
        );
        assert!(RunConfig::from_str_at(&text, Path::new("/tmp")).is_err());
    }
}
