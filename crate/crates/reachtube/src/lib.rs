//! Reachtube construction for nonlinear ODEs and continuous-depth models.
//!
//! Two families of engines over a shared numeric core:
//!
//! - **Deterministic** ([`lrtng`]): propagates a validated enclosure of the
//!   deformation gradient through the interval variational equation, bounds its
//!   weighted norm (stretching factor), and emits per-step ellipsoids in an
//!   analytically optimal metric intersected with Euclidean balls.
//! - **Statistical** ([`stochastic`]): integrates sampled surface points of the
//!   initial ball together with their sensitivities, covers the surface with
//!   Lipschitz caps (GoTube) or deterministic safety regions (SLR), and
//!   accumulates the confidence that the sampled maximum distance, scaled by a
//!   tightness factor, bounds the true maximum.
//!
//! The [`harness`] module holds the CLI-facing configuration, artifact
//! persistence, benchmark registry, audits, and SVG rendering.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod interval;
pub mod lrtng;
pub mod ode;
pub mod stats;
pub mod stochastic;

pub use error::{ReachError, Result};
