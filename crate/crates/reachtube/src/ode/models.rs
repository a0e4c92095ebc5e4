//! Benchmark model registry.
//!
//! All models carry analytic Jacobians and interval extensions of both the
//! vector field and the Jacobian, which the validated integrator and the
//! stretching-factor computation rely on.

use super::VectorField;
use crate::error::{ReachError, Result};
use crate::interval::{IMatrix, IVector, Interval};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Key-value parameter bag for [`model_registry`].
#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    scalars: BTreeMap<String, f64>,
    vectors: BTreeMap<String, Vec<f64>>,
    matrices: BTreeMap<String, Vec<Vec<f64>>>,
    strings: BTreeMap<String, String>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar(&mut self, key: &str, v: f64) -> &mut Self {
        self.scalars.insert(key.to_string(), v);
        self
    }

    pub fn vector(&mut self, key: &str, v: Vec<f64>) -> &mut Self {
        self.vectors.insert(key.to_string(), v);
        self
    }

    pub fn matrix(&mut self, key: &str, v: Vec<Vec<f64>>) -> &mut Self {
        self.matrices.insert(key.to_string(), v);
        self
    }

    pub fn string(&mut self, key: &str, v: &str) -> &mut Self {
        self.strings.insert(key.to_string(), v.to_string());
        self
    }

    pub fn get_scalar(&self, key: &str, default: f64) -> f64 {
        self.scalars.get(key).copied().unwrap_or(default)
    }

    pub fn get_string(&self, key: &str) -> Option<&str> {
        self.strings.get(key).map(|s| s.as_str())
    }
}

/// Weights document for the `ctrnn` and `linear` models.
#[derive(Debug, Deserialize)]
struct WeightsDoc {
    dim: usize,
    tau: Option<Vec<f64>>,
    #[serde(rename = "W")]
    w: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    #[serde(rename = "A")]
    a: Option<Vec<Vec<f64>>>,
    c: Option<Vec<f64>>,
}

fn load_weights(path: &str) -> Result<WeightsDoc> {
    let text = std::fs::read_to_string(Path::new(path))
        .map_err(|e| ReachError::WeightsFile(format!("{path}: {e}")))?;
    toml::from_str(&text).map_err(|e| ReachError::WeightsFile(format!("{path}: {e}")))
}

fn to_matrix(rows: &[Vec<f64>], dim: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(ReachError::WeightsFile(format!(
            "{name} must be a {dim}x{dim} matrix"
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn to_vector(v: &[f64], dim: usize, name: &str) -> Result<DVector<f64>> {
    if v.len() != dim {
        return Err(ReachError::WeightsFile(format!(
            "{name} must have {dim} entries, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_row_slice(v))
}

/// Look up a benchmark model by name.
///
/// Registered names: `brusselator`, `vanderpol`, `dubins_car`,
/// `cardiac_cell`, `robotarm`, `ctrnn`, `linear`. The last two take their
/// coefficients either from a `weights` file path parameter or from direct
/// matrix/vector parameters.
pub fn model_registry(name: &str, params: &ModelParams) -> Result<Box<dyn VectorField>> {
    match name {
        "brusselator" => Ok(Box::new(Brusselator {
            a: params.get_scalar("a", 1.0),
            b: params.get_scalar("b", 1.5),
        })),
        "vanderpol" => Ok(Box::new(VanDerPol {
            mu: params.get_scalar("mu", 1.0),
        })),
        "dubins_car" => Ok(Box::new(DubinsCar {
            v: params.get_scalar("v", 1.0),
            u: params.get_scalar("u", 1.0),
        })),
        "cardiac_cell" => Ok(Box::new(CardiacCell)),
        "robotarm" => Ok(Box::new(RobotArm {
            grav: params.get_scalar("grav", 10.0),
            k_link: params.get_scalar("k_link", 10.0),
            k_motor: params.get_scalar("k_motor", 10.0),
        })),
        "ctrnn" => {
            let (dim, tau, w, b) = if let Some(path) = params.get_string("weights") {
                let doc = load_weights(path)?;
                let dim = doc.dim;
                let tau = to_vector(
                    doc.tau
                        .as_deref()
                        .ok_or_else(|| ReachError::WeightsFile("missing field `tau`".into()))?,
                    dim,
                    "tau",
                )?;
                let w = to_matrix(
                    doc.w
                        .as_deref()
                        .ok_or_else(|| ReachError::WeightsFile("missing field `W`".into()))?,
                    dim,
                    "W",
                )?;
                let b = to_vector(
                    doc.b
                        .as_deref()
                        .ok_or_else(|| ReachError::WeightsFile("missing field `b`".into()))?,
                    dim,
                    "b",
                )?;
                (dim, tau, w, b)
            } else {
                let tau = params
                    .vectors
                    .get("tau")
                    .ok_or_else(|| ReachError::Config("ctrnn requires `weights` or `tau`/`W`/`b` params".into()))?;
                let dim = tau.len();
                let w = to_matrix(
                    params
                        .matrices
                        .get("W")
                        .ok_or_else(|| ReachError::Config("ctrnn missing `W`".into()))?,
                    dim,
                    "W",
                )?;
                let b = to_vector(
                    params
                        .vectors
                        .get("b")
                        .ok_or_else(|| ReachError::Config("ctrnn missing `b`".into()))?,
                    dim,
                    "b",
                )?;
                (dim, to_vector(tau, dim, "tau")?, w, b)
            };
            if tau.iter().any(|&t| t <= 0.0) {
                return Err(ReachError::WeightsFile("tau entries must be positive".into()));
            }
            Ok(Box::new(Ctrnn { dim, tau, w, b }))
        }
        "linear" => {
            let (a, c) = if let Some(path) = params.get_string("weights") {
                let doc = load_weights(path)?;
                let dim = doc.dim;
                let a = to_matrix(
                    doc.a
                        .as_deref()
                        .ok_or_else(|| ReachError::WeightsFile("missing field `A`".into()))?,
                    dim,
                    "A",
                )?;
                let c = to_vector(
                    doc.c
                        .as_deref()
                        .ok_or_else(|| ReachError::WeightsFile("missing field `c`".into()))?,
                    dim,
                    "c",
                )?;
                (a, c)
            } else {
                let rows = params
                    .matrices
                    .get("A")
                    .ok_or_else(|| ReachError::Config("linear requires `weights` or `A`/`c` params".into()))?;
                let dim = rows.len();
                let a = to_matrix(rows, dim, "A")?;
                let c = match params.vectors.get("c") {
                    Some(c) => to_vector(c, dim, "c")?,
                    None => DVector::zeros(dim),
                };
                (a, c)
            };
            Ok(Box::new(Linear { a, c }))
        }
        other => Err(ReachError::UnknownModel(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// Classical benchmark systems
// ---------------------------------------------------------------------------

struct Brusselator {
    a: f64,
    b: f64,
}

impl VectorField for Brusselator {
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "brusselator"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let (x1, x2) = (x[0], x[1]);
        DVector::from_row_slice(&[
            self.a - (self.b + 1.0) * x1 + x1 * x1 * x2,
            self.b * x1 - x1 * x1 * x2,
        ])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (x1, x2) = (x[0], x[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -(self.b + 1.0) + 2.0 * x1 * x2,
                x1 * x1,
                self.b - 2.0 * x1 * x2,
                -x1 * x1,
            ],
        )
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let (x1, x2) = (x.get(0), x.get(1));
        let sq = x1.sqr();
        let cross = sq.mul(&x2);
        IVector::new(vec![
            Interval::point(self.a)
                .sub(&x1.scale(self.b + 1.0))
                .add(&cross),
            x1.scale(self.b).sub(&cross),
        ])
        .unwrap()
    }
    fn interval_jacobian(&self, x: &IVector) -> IMatrix {
        let (x1, x2) = (x.get(0), x.get(1));
        let sq = x1.sqr();
        let two_x1x2 = x1.mul(&x2).scale(2.0);
        IMatrix::new(
            vec![
                two_x1x2.sub(&Interval::point(self.b + 1.0)),
                sq,
                Interval::point(self.b).sub(&two_x1x2),
                sq.neg(),
            ],
            2,
            2,
        )
        .unwrap()
    }
}

struct VanDerPol {
    mu: f64,
}

impl VectorField for VanDerPol {
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "vanderpol"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&[x[1], self.mu * (1.0 - x[0] * x[0]) * x[1] - x[0]])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                0.0,
                1.0,
                -2.0 * self.mu * x[0] * x[1] - 1.0,
                self.mu * (1.0 - x[0] * x[0]),
            ],
        )
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let (x1, x2) = (x.get(0), x.get(1));
        let one_minus_sq = Interval::point(1.0).sub(&x1.sqr());
        IVector::new(vec![x2, one_minus_sq.mul(&x2).scale(self.mu).sub(&x1)]).unwrap()
    }
    fn interval_jacobian(&self, x: &IVector) -> IMatrix {
        let (x1, x2) = (x.get(0), x.get(1));
        IMatrix::new(
            vec![
                Interval::zero(),
                Interval::point(1.0),
                x1.mul(&x2)
                    .scale(-2.0 * self.mu)
                    .sub(&Interval::point(1.0)),
                Interval::point(1.0).sub(&x1.sqr()).scale(self.mu),
            ],
            2,
            2,
        )
        .unwrap()
    }
}

struct DubinsCar {
    v: f64,
    u: f64,
}

impl VectorField for DubinsCar {
    fn dim(&self) -> usize {
        3
    }
    fn name(&self) -> &str {
        "dubins_car"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&[self.v * x[2].cos(), self.v * x[2].sin(), self.u])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                0.0,
                -self.v * x[2].sin(),
                0.0,
                0.0,
                self.v * x[2].cos(),
                0.0,
                0.0,
                0.0,
            ],
        )
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let th = x.get(2);
        IVector::new(vec![
            th.cos().scale(self.v),
            th.sin().scale(self.v),
            Interval::point(self.u),
        ])
        .unwrap()
    }
    fn interval_jacobian(&self, x: &IVector) -> IMatrix {
        let th = x.get(2);
        let z = Interval::zero();
        IMatrix::new(
            vec![
                z,
                z,
                th.sin().scale(-self.v),
                z,
                z,
                th.cos().scale(self.v),
                z,
                z,
                z,
            ],
            3,
            3,
        )
        .unwrap()
    }
}

/// Two-variable excitable cardiac cell model.
struct CardiacCell;

impl VectorField for CardiacCell {
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "cardiac_cell"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let (u, v) = (x[0], x[1]);
        DVector::from_row_slice(&[-0.9 * u * u - u * u * u - 0.9 * u - v + 1.0, u - 2.0 * v])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let u = x[0];
        DMatrix::from_row_slice(2, 2, &[-1.8 * u - 3.0 * u * u - 0.9, -1.0, 1.0, -2.0])
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let (u, v) = (x.get(0), x.get(1));
        let u2 = u.sqr();
        let u3 = u.powi(3);
        IVector::new(vec![
            u2.scale(-0.9)
                .sub(&u3)
                .sub(&u.scale(0.9))
                .sub(&v)
                .add(&Interval::point(1.0)),
            u.sub(&v.scale(2.0)),
        ])
        .unwrap()
    }
    fn interval_jacobian(&self, x: &IVector) -> IMatrix {
        let u = x.get(0);
        IMatrix::new(
            vec![
                u.scale(-1.8)
                    .sub(&u.sqr().scale(3.0))
                    .sub(&Interval::point(0.9)),
                Interval::point(-1.0),
                Interval::point(1.0),
                Interval::point(-2.0),
            ],
            2,
            2,
        )
        .unwrap()
    }
}

/// Single-link arm with a flexible joint: link angle/velocity and motor
/// angle/velocity.
struct RobotArm {
    grav: f64,
    k_link: f64,
    k_motor: f64,
}

impl VectorField for RobotArm {
    fn dim(&self) -> usize {
        4
    }
    fn name(&self) -> &str {
        "robotarm"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&[
            x[1],
            -self.grav * x[0].sin() - self.k_link * (x[0] - x[2]),
            x[3],
            self.k_motor * (x[0] - x[2]),
        ])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0,
                1.0,
                0.0,
                0.0,
                -self.grav * x[0].cos() - self.k_link,
                0.0,
                self.k_link,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                self.k_motor,
                0.0,
                -self.k_motor,
                0.0,
            ],
        )
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let diff = x.get(0).sub(&x.get(2));
        IVector::new(vec![
            x.get(1),
            x.get(0)
                .sin()
                .scale(-self.grav)
                .sub(&diff.scale(self.k_link)),
            x.get(3),
            diff.scale(self.k_motor),
        ])
        .unwrap()
    }
    fn interval_jacobian(&self, x: &IVector) -> IMatrix {
        let z = Interval::zero();
        let one = Interval::point(1.0);
        IMatrix::new(
            vec![
                z,
                one,
                z,
                z,
                x.get(0)
                    .cos()
                    .scale(-self.grav)
                    .sub(&Interval::point(self.k_link)),
                z,
                Interval::point(self.k_link),
                z,
                z,
                z,
                z,
                one,
                Interval::point(self.k_motor),
                z,
                Interval::point(-self.k_motor),
                z,
            ],
            4,
            4,
        )
        .unwrap()
    }
}

/// Continuous-time RNN: `x' = -x/tau + W tanh(x) + b`.
struct Ctrnn {
    dim: usize,
    tau: DVector<f64>,
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl VectorField for Ctrnn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &str {
        "ctrnn"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let act = x.map(|v| v.tanh());
        let mut out = &self.w * act + &self.b;
        for i in 0..self.dim {
            out[i] -= x[i] / self.tau[i];
        }
        out
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        // d/dx tanh = 1 - tanh^2
        let mut j = self.w.clone();
        for c in 0..self.dim {
            let t = x[c].tanh();
            let d = 1.0 - t * t;
            for r in 0..self.dim {
                j[(r, c)] *= d;
            }
        }
        for i in 0..self.dim {
            j[(i, i)] -= 1.0 / self.tau[i];
        }
        j
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let mut out = Vec::with_capacity(self.dim);
        let act: Vec<Interval> = (0..self.dim).map(|i| x.get(i).tanh()).collect();
        for i in 0..self.dim {
            let mut acc = Interval::point(self.b[i]);
            for (k, a) in act.iter().enumerate() {
                acc = acc.add(&a.scale(self.w[(i, k)]));
            }
            acc = acc.sub(&x.get(i).scale(1.0 / self.tau[i]));
            out.push(acc);
        }
        IVector::new(out).unwrap()
    }
    fn interval_jacobian(&self, x: &IVector) -> IMatrix {
        let mut entries = Vec::with_capacity(self.dim * self.dim);
        let deriv: Vec<Interval> = (0..self.dim)
            .map(|i| {
                // 1 - tanh^2 lies in [0, 1]
                let t = x.get(i).tanh();
                let d = Interval::point(1.0).sub(&t.sqr());
                Interval::new(d.lo().max(0.0), d.hi().min(1.0)).unwrap()
            })
            .collect();
        for r in 0..self.dim {
            for c in 0..self.dim {
                let mut e = deriv[c].scale(self.w[(r, c)]);
                if r == c {
                    e = e.sub(&Interval::point(1.0 / self.tau[r]));
                }
                entries.push(e);
            }
        }
        IMatrix::new(entries, self.dim, self.dim).unwrap()
    }
}

/// Affine system `x' = A x + c`.
struct Linear {
    a: DMatrix<f64>,
    c: DVector<f64>,
}

impl VectorField for Linear {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn name(&self) -> &str {
        "linear"
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.c
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
    fn interval_eval(&self, x: &IVector) -> IVector {
        let n = self.dim();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = Interval::point(self.c[i]);
            for k in 0..n {
                acc = acc.add(&x.get(k).scale(self.a[(i, k)]));
            }
            out.push(acc);
        }
        IVector::new(out).unwrap()
    }
    fn interval_jacobian(&self, _x: &IVector) -> IMatrix {
        IMatrix::from_real(&self.a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn all_models() -> Vec<Box<dyn VectorField>> {
        let mut ctrnn_params = ModelParams::new();
        ctrnn_params
            .vector("tau", vec![1.0, 2.0, 0.5])
            .matrix(
                "W",
                vec![
                    vec![0.1, -0.4, 0.2],
                    vec![0.3, 0.0, -0.1],
                    vec![-0.2, 0.5, 0.1],
                ],
            )
            .vector("b", vec![0.1, -0.2, 0.0]);
        let mut lin_params = ModelParams::new();
        lin_params
            .matrix("A", vec![vec![-1.0, 0.5], vec![0.0, -2.0]])
            .vector("c", vec![0.1, 0.0]);
        vec![
            model_registry("brusselator", &ModelParams::new()).unwrap(),
            model_registry("vanderpol", &ModelParams::new()).unwrap(),
            model_registry("dubins_car", &ModelParams::new()).unwrap(),
            model_registry("cardiac_cell", &ModelParams::new()).unwrap(),
            model_registry("robotarm", &ModelParams::new()).unwrap(),
            model_registry("ctrnn", &ctrnn_params).unwrap(),
            model_registry("linear", &lin_params).unwrap(),
        ]
    }

    #[test]
    fn brusselator_hand_evaluation() {
        let f = model_registry("brusselator", &ModelParams::new()).unwrap();
        let out = f.eval(&DVector::from_row_slice(&[1.0, 1.0]));
        // a - (b+1) x1 + x1^2 x2 = 1 - 2.5 + 1 = -0.5; b x1 - x1^2 x2 = 0.5
        assert!((out[0] - -0.5).abs() < 1e-15);
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dubins_axis_aligned_heading() {
        let mut p = ModelParams::new();
        p.scalar("u", 0.25);
        let f = model_registry("dubins_car", &p).unwrap();
        let out = f.eval(&DVector::from_row_slice(&[3.0, -1.0, 0.0]));
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!(out[1].abs() < 1e-15);
        assert!((out[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ctrnn_with_zero_weights_is_decay() {
        let mut p = ModelParams::new();
        p.vector("tau", vec![1.0, 1.0])
            .matrix("W", vec![vec![0.0, 0.0], vec![0.0, 0.0]])
            .vector("b", vec![0.0, 0.0]);
        let f = model_registry("ctrnn", &p).unwrap();
        let x = DVector::from_row_slice(&[0.7, -0.3]);
        let out = f.eval(&x);
        assert!((out[0] + 0.7).abs() < 1e-15);
        assert!((out[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn unknown_model_is_error() {
        assert!(matches!(
            model_registry("lorenz", &ModelParams::new()),
            Err(ReachError::UnknownModel(_))
        ));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for f in all_models() {
            let n = f.dim();
            for _ in 0..100 {
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let j = f.jacobian(&x);
                let h = 1e-6;
                for c in 0..n {
                    let mut xp = x.clone();
                    xp[c] += h;
                    let mut xm = x.clone();
                    xm[c] -= h;
                    let d = (f.eval(&xp) - f.eval(&xm)) / (2.0 * h);
                    for r in 0..n {
                        let rel = (j[(r, c)] - d[r]).abs() / d[r].abs().max(1.0);
                        assert!(
                            rel < 1e-5,
                            "{}: J[{r}][{c}] = {} vs fd {}",
                            f.name(),
                            j[(r, c)],
                            d[r]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn interval_extensions_agree_on_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for f in all_models() {
            let n = f.dim();
            for _ in 0..50 {
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5));
                let xi = IVector::from_point(&x);
                let fe = f.eval(&x);
                let fi = f.interval_eval(&xi);
                for i in 0..n {
                    assert!(
                        fi.get(i).contains(fe[i]) || (fi.get(i).mid() - fe[i]).abs() < 1e-12,
                        "{}: component {i}",
                        f.name()
                    );
                    assert!(fi.get(i).width() < 1e-10);
                }
                let je = f.jacobian(&x);
                let ji = f.interval_jacobian(&xi);
                for r in 0..n {
                    for c in 0..n {
                        assert!((ji.get(r, c).mid() - je[(r, c)]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn interval_extensions_contain_member_evaluations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in all_models() {
            let n = f.dim();
            for _ in 0..20 {
                let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let bx = IVector::centered(&c, 0.2).unwrap();
                let fe = f.interval_eval(&bx);
                let je = f.interval_jacobian(&bx);
                for _ in 0..100 {
                    let x = DVector::from_fn(n, |i, _| {
                        let e = bx.get(i);
                        rng.gen_range(e.lo()..=e.hi())
                    });
                    let fv = f.eval(&x);
                    let jv = f.jacobian(&x);
                    for i in 0..n {
                        assert!(fe.get(i).contains(fv[i]), "{} f[{i}]", f.name());
                        for jj in 0..n {
                            assert!(je.get(i, jj).contains(jv[(i, jj)]), "{} J", f.name());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn weights_file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("w.toml");
        std::fs::write(
            &good,
            "dim = 2\ntau = [1.0, 1.0]\nW = [[0.0, 0.1], [0.2, 0.0]]\nb = [0.0, 0.0]\n",
        )
        .unwrap();
        let mut p = ModelParams::new();
        p.string("weights", good.to_str().unwrap());
        assert!(model_registry("ctrnn", &p).is_ok());

        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "dim = 2\ntau = [1.0]\n").unwrap();
        let mut p = ModelParams::new();
        p.string("weights", bad.to_str().unwrap());
        match model_registry("ctrnn", &p) {
            Err(ReachError::WeightsFile(_)) => {}
            Err(e) => panic!("wrong error: {e}"),
            Ok(_) => panic!("malformed weights file accepted"),
        }
    }
}
