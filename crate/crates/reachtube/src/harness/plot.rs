//! SVG projections of stored tubes.
//!
//! The tube is drawn in the plane of two chosen state coordinates: ellipse
//! outlines for the deterministic engine, circles for the statistical ones,
//! with optional overlaid sampled trajectories. Output is deterministic for
//! fixed inputs.

use super::artifact::{StepRecord, TubeArtifact};
use super::config::RunConfig;
use crate::error::{ReachError, Result};
use crate::geometry::sample_sphere_surface;
use crate::ode::{model_registry, solve_ivp};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
const OUTLINE_POINTS: usize = 64;

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn grow(&mut self, x: f64, y: f64) {
        self.x_lo = self.x_lo.min(x);
        self.x_hi = self.x_hi.max(x);
        self.y_lo = self.y_lo.min(y);
        self.y_hi = self.y_hi.max(y);
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (WIDTH - 2.0 * MARGIN) / (self.x_hi - self.x_lo).max(1e-12);
        let sy = (HEIGHT - 2.0 * MARGIN) / (self.y_hi - self.y_lo).max(1e-12);
        let s = sx.min(sy);
        (
            MARGIN + (x - self.x_lo) * s,
            HEIGHT - MARGIN - (y - self.y_lo) * s,
        )
    }
}

/// Boundary polygon of a step's set projected on coordinates `(i, j)`.
fn outline(step: &StepRecord, dims: (usize, usize)) -> Result<Vec<(f64, f64)>> {
    let (i, j) = dims;
    let c = step.center();
    let mut pts = Vec::with_capacity(OUTLINE_POINTS + 1);
    match step {
        StepRecord::Stochastic(r) => {
            for k in 0..=OUTLINE_POINTS {
                let a = 2.0 * std::f64::consts::PI * k as f64 / OUTLINE_POINTS as f64;
                pts.push((c[i] + r.radius * a.cos(), c[j] + r.radius * a.sin()));
            }
        }
        StepRecord::Lrtng(r) => {
            // Projection of the ellipsoid: the (i, j) block of M^{-1} scaled
            // by the squared radius is the covariance of the shadow ellipse.
            let n = c.len();
            let m = DMatrix::from_row_slice(n, n, &r.metric_m);
            let m_inv = m.try_inverse().ok_or_else(|| {
                ReachError::Singular("stored metric is not invertible".into())
            })?;
            let block = DMatrix::from_row_slice(
                2,
                2,
                &[
                    m_inv[(i, i)],
                    m_inv[(i, j)],
                    m_inv[(j, i)],
                    m_inv[(j, j)],
                ],
            ) * (r.ell_radius * r.ell_radius);
            let sym = (&block + block.transpose()) * 0.5;
            let chol = sym
                .cholesky()
                .ok_or(ReachError::NotPositiveDefinite)?;
            let l = chol.l();
            for k in 0..=OUTLINE_POINTS {
                let a = 2.0 * std::f64::consts::PI * k as f64 / OUTLINE_POINTS as f64;
                let u = DVector::from_row_slice(&[a.cos(), a.sin()]);
                let p = &l * u;
                pts.push((c[i] + p[0], c[j] + p[1]));
            }
        }
    }
    Ok(pts)
}

/// Render the tube projection as an SVG document.
pub fn plot_tube(
    artifact: &TubeArtifact,
    dims: (usize, usize),
    overlay: Option<(&RunConfig, usize)>,
) -> Result<String> {
    if artifact.steps.is_empty() {
        return Err(ReachError::InvalidInput("artifact holds no steps".into()));
    }
    let dim = artifact.steps[0].center().len();
    if dims.0 >= dim || dims.1 >= dim {
        return Err(ReachError::InvalidInput(format!(
            "dims ({}, {}) out of range for model dimension {dim}",
            dims.0, dims.1
        )));
    }

    let outlines: Result<Vec<Vec<(f64, f64)>>> =
        artifact.steps.iter().map(|s| outline(s, dims)).collect();
    let outlines = outlines?;

    // Optional sampled trajectories, observed at the stored step times.
    let mut trails: Vec<Vec<(f64, f64)>> = Vec::new();
    if let Some((cfg, count)) = overlay {
        if count > 0 {
            let params = cfg.model_params()?;
            let field = model_registry(cfg.model_name(), &params)?;
            let integrator = cfg.integrator()?;
            let mut states =
                sample_sphere_surface(dim, &cfg.x0(), cfg.delta0(), count, cfg.seed())?;
            trails = states
                .iter()
                .map(|x| vec![(x[dims.0], x[dims.1])])
                .collect();
            let mut t_prev = 0.0;
            for step in &artifact.steps {
                let t = step.time();
                for (x, trail) in states.iter_mut().zip(trails.iter_mut()) {
                    *x = solve_ivp(field.as_ref(), x, (t_prev, t), &integrator)?;
                    trail.push((x[dims.0], x[dims.1]));
                }
                t_prev = t;
            }
        }
    }

    let mut frame = Frame {
        x_lo: f64::INFINITY,
        x_hi: f64::NEG_INFINITY,
        y_lo: f64::INFINITY,
        y_hi: f64::NEG_INFINITY,
    };
    for poly in outlines.iter().chain(trails.iter()) {
        for &(x, y) in poly {
            frame.grow(x, y);
        }
    }

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{MARGIN}" y="24" font-family="monospace" font-size="14">{} tube, coords ({}, {})</text>"#,
        artifact.metadata.engine, dims.0, dims.1
    )
    .unwrap();

    for trail in &trails {
        let path: Vec<String> = trail
            .iter()
            .map(|&(x, y)| {
                let (px, py) = frame.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#888888" stroke-width="0.6"/>"##,
            path.join(" ")
        )
        .unwrap();
    }
    for (k, poly) in outlines.iter().enumerate() {
        let shade = 40 + (160 * k) / outlines.len().max(1);
        let path: Vec<String> = poly
            .iter()
            .map(|&(x, y)| {
                let (px, py) = frame.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#0040{shade:02x}" stroke-width="1"/>"##,
            path.join(" ")
        )
        .unwrap();
    }
    writeln!(svg, "</svg>").unwrap();
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ops::run_engine;
    use std::path::Path;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_str_at(text, Path::new(".")).unwrap()
    }

    const ZERO_FIELD: &str = r#"
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
    fn zero_field_renders_concentric_circles() {
        let c = cfg(ZERO_FIELD);
        let art = run_engine(&c).unwrap();
        let svg = plot_tube(&art, (0, 1), None).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), art.steps.len());
    }

    #[test]
    fn overlay_and_lrtng_ellipses_render() {
        let text = ZERO_FIELD
            .replace("name = \"linear\"", "name = \"brusselator\"")
            .replace("x0 = [0.0, 0.0]", "x0 = [1.0, 1.0]")
            .replace("kind = \"gotube\"", "kind = \"lrtng\"");
        let c = cfg(&text);
        let art = run_engine(&c).unwrap();
        let svg = plot_tube(&art, (0, 1), Some((&c, 5))).unwrap();
        assert!(svg.contains("polyline"));
        assert_eq!(
            svg.matches("<polyline").count(),
            art.steps.len() + 5
        );
        // Deterministic output.
        let svg2 = plot_tube(&art, (0, 1), Some((&c, 5))).unwrap();
        assert_eq!(svg, svg2);
    }

    #[test]
    fn bad_dims_are_rejected() {
        let c = cfg(ZERO_FIELD);
        let art = run_engine(&c).unwrap();
        assert!(plot_tube(&art, (0, 5), None).is_err());
    }
}
