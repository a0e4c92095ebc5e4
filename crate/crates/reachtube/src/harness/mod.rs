//! Configuration ingestion, run orchestration, tube persistence, audits,
//! comparisons, Pareto sweeps, and SVG plots.

pub mod artifact;
pub mod config;
pub mod ops;
pub mod plot;

pub use artifact::{ArtifactMetadata, StepRecord, TubeArtifact};
pub use config::{EngineKind, RunConfig};
pub use ops::{audit, compare, pareto, run_engine, AuditOutcome, CompareTable, ParetoPoint};
pub use plot::plot_tube;
