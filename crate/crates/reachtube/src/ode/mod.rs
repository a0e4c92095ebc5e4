//! ODE models and integration: point solves, augmented (variational)
//! solves, and validated interval integration of state plus deformation
//! gradient.

pub mod models;
mod validated;

pub use models::{model_registry, ModelParams};
pub use validated::{integrate_validated, solve_interval_augmented, ValidatedState};

use crate::error::{ReachError, Result};
use crate::interval::{IMatrix, IVector};
use nalgebra::{DMatrix, DVector};

/// An autonomous ODE model `x' = f(x)` with analytic Jacobian and interval
/// extensions of both.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn interval_eval(&self, x: &IVector) -> IVector;
    fn interval_jacobian(&self, x: &IVector) -> IMatrix;
}

/// Step-size control for the numeric integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    /// Classical RK4 with a fixed step.
    Rk4Fixed { step: f64 },
    /// Dormand-Prince 5(4) with PI step-size control.
    Rk45Adaptive { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub control: StepControl,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn rk4_fixed(step: f64) -> Self {
        assert!(step > 0.0);
        Self {
            control: StepControl::Rk4Fixed { step },
            max_steps: 10_000_000,
        }
    }

    pub fn rk45_adaptive(rtol: f64, atol: f64) -> Self {
        assert!(rtol > 0.0 && atol > 0.0);
        Self {
            control: StepControl::Rk45Adaptive { rtol, atol },
            max_steps: 10_000_000,
        }
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::rk45_adaptive(1e-9, 1e-9)
    }
}

/// State paired with its deformation gradient (sensitivity of the flow with
/// respect to the initial state).
#[derive(Debug, Clone)]
pub struct AugmentedState {
    pub x: DVector<f64>,
    pub f: DMatrix<f64>,
}

impl AugmentedState {
    pub fn initial(x: DVector<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            f: DMatrix::identity(n, n),
        }
    }

    /// Diagnostic for degenerate gradients; not an error by itself.
    pub fn gradient_is_degenerate(&self) -> bool {
        self.f.determinant().abs() <= 1e-12
    }
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = deriv(y)` from `t_a` to `t_b`.
fn integrate<D>(deriv: D, y0: DVector<f64>, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<DVector<f64>>
where
    D: Fn(&DVector<f64>) -> DVector<f64>,
{
    let (t_a, t_b) = t_span;
    if t_b < t_a {
        return Err(ReachError::InvalidInput(format!(
            "reversed time span [{t_a}, {t_b}]"
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(ReachError::InvalidInput("non-finite initial state".into()));
    }
    if t_b == t_a {
        return Ok(y0);
    }
    match cfg.control {
        StepControl::Rk4Fixed { step } => rk4_fixed(deriv, y0, t_a, t_b, step, cfg.max_steps),
        StepControl::Rk45Adaptive { rtol, atol } => {
            rk45_adaptive(deriv, y0, t_a, t_b, rtol, atol, cfg.max_steps)
        }
    }
}

fn rk4_fixed<D>(
    deriv: D,
    mut y: DVector<f64>,
    t_a: f64,
    t_b: f64,
    step: f64,
    max_steps: usize,
) -> Result<DVector<f64>>
where
    D: Fn(&DVector<f64>) -> DVector<f64>,
{
    let span = t_b - t_a;
    let n_steps = (span / step).ceil().max(1.0) as usize;
    if n_steps > max_steps {
        return Err(ReachError::Horizon {
            max_steps,
            t_end: t_b,
        });
    }
    let h = span / n_steps as f64;
    let mut t = t_a;
    for _ in 0..n_steps {
        let k1 = deriv(&y);
        let k2 = deriv(&(&y + &k1 * (h / 2.0)));
        let k3 = deriv(&(&y + &k2 * (h / 2.0)));
        let k4 = deriv(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ReachError::Blowup { t });
        }
    }
    Ok(y)
}

fn rk45_adaptive<D>(
    deriv: D,
    mut y: DVector<f64>,
    t_a: f64,
    t_b: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
) -> Result<DVector<f64>>
where
    D: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut t = t_a;
    let mut h = ((t_b - t_a) / 100.0).min(0.1).max(1e-8);
    let mut steps = 0usize;
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    while t < t_b {
        if steps >= max_steps {
            return Err(ReachError::Horizon {
                max_steps,
                t_end: t_b,
            });
        }
        steps += 1;
        h = h.min(t_b - t);
        k.clear();
        k.push(deriv(&y));
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[s][j.min(5)];
                if j < 6 && a != 0.0 {
                    ys += kj * (h * a);
                }
            }
            let _ = DP_C; // stage times unused: the system is autonomous
            k.push(deriv(&ys));
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if DP_B5[j] != 0.0 {
                y5 += kj * (h * DP_B5[j]);
            }
            if DP_B4[j] != 0.0 {
                y4 += kj * (h * DP_B4[j]);
            }
        }
        if y5.iter().any(|v| !v.is_finite()) {
            return Err(ReachError::Blowup { t });
        }
        // Scaled RMS error estimate.
        let mut err = 0.0;
        for i in 0..y.len() {
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4[i]) / sc;
            err += e * e;
        }
        err = (err / y.len() as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * factor).max(1e-12);
    }
    Ok(y)
}

/// Solve the IVP for a point initial state, returning the state at `t_b`.
pub fn solve_ivp(
    f: &dyn VectorField,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>> {
    if x0.len() != f.dim() {
        return Err(ReachError::DimensionMismatch(format!(
            "model {} has dim {}, got initial state of dim {}",
            f.name(),
            f.dim(),
            x0.len()
        )));
    }
    integrate(|x| f.eval(x), x0.clone(), t_span, cfg)
}

fn pack(x: &DVector<f64>, fm: &DMatrix<f64>) -> DVector<f64> {
    let n = x.len();
    let mut y = DVector::zeros(n + n * n);
    y.rows_mut(0, n).copy_from(x);
    for i in 0..n {
        for j in 0..n {
            y[n + i * n + j] = fm[(i, j)];
        }
    }
    y
}

fn unpack(y: &DVector<f64>, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let x = DVector::from_iterator(n, y.rows(0, n).iter().cloned());
    let f = DMatrix::from_fn(n, n, |i, j| y[n + i * n + j]);
    (x, f)
}

/// Integrate the augmented system `(x' , F') = (f(x), J(x) F)` jointly,
/// starting from `(x0, F0)`. With `F0 = I` the returned `F` approximates the
/// Jacobian of the flow map with respect to the initial state.
pub fn solve_augmented_from(
    f: &dyn VectorField,
    start: &AugmentedState,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<AugmentedState> {
    let n = f.dim();
    let y0 = pack(&start.x, &start.f);
    let deriv = |y: &DVector<f64>| {
        let (x, fm) = unpack(y, n);
        let dx = f.eval(&x);
        let df = f.jacobian(&x) * fm;
        pack(&dx, &df)
    };
    let yt = integrate(deriv, y0, t_span, cfg)?;
    let (x, fm) = unpack(&yt, n);
    Ok(AugmentedState { x, f: fm })
}

/// As [`solve_augmented_from`] with `F(t_a) = I`.
pub fn solve_augmented(
    f: &dyn VectorField,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<AugmentedState> {
    if x0.len() != f.dim() {
        return Err(ReachError::DimensionMismatch(format!(
            "model {} has dim {}, got initial state of dim {}",
            f.name(),
            f.dim(),
            x0.len()
        )));
    }
    solve_augmented_from(f, &AugmentedState::initial(x0.clone()), t_span, cfg)
}
