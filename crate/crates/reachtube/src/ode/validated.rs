//! Validated interval integration of the state together with the
//! deformation gradient.
//!
//! Per substep the integrator
//!
//! 1. validates an a-priori box enclosing all trajectories over the step via
//!    epsilon-inflation of the Picard operator,
//! 2. advances the midpoint trajectory with a second-order Taylor step whose
//!    Lagrange remainder is evaluated on the midpoint's own a-priori box,
//! 3. advances the deviation from the midpoint and the gradient enclosure
//!    with an interval transition matrix: the truncated series
//!    `sum_k (h [J])^k / k!` plus a rigorous tail bound (the Peano series of
//!    the time-varying linear deviation dynamics is contained term by term in
//!    the interval powers), and
//! 4. absorbs the rotational part of the gradient enclosure into an
//!    orthogonal frame (Lohner QR) to limit the wrapping effect.

use super::{IntegratorConfig, StepControl, VectorField};
use crate::error::{ReachError, Result};
use crate::interval::{lohner_qr_recondition, IMatrix, IVector, Interval};
use nalgebra::DMatrix;

/// Epsilon-inflation schedule for the a-priori enclosure.
const INFLATE_REL: f64 = 0.1;
const INFLATE_ABS: f64 = 1e-10;
const MAX_INFLATIONS: usize = 20;

/// State box plus gradient enclosure factored as `[F] = Q * [G]` with `Q`
/// orthogonal. Keeping the factorization across steps is what lets repeated
/// rotations ride in the frame instead of inflating the box.
#[derive(Debug, Clone)]
pub struct ValidatedState {
    pub x: IVector,
    q: DMatrix<f64>,
    g: IMatrix,
}

impl ValidatedState {
    pub fn new(x: IVector, f0: &IMatrix) -> Result<Self> {
        let (q, g) = lohner_qr_recondition(f0)?;
        Ok(Self { x, q, g })
    }

    /// The gradient enclosure as a plain interval matrix.
    pub fn gradient(&self) -> IMatrix {
        self.g
            .mul_real_left(&self.q)
            .expect("frame dimensions are consistent")
    }

    /// Replace the state box, keeping the gradient factorization. Used by the
    /// deterministic engine when it re-seeds the box from the
    /// ellipsoid-ball intersection.
    pub fn reseed_state(&mut self, x: IVector) {
        self.x = x;
    }
}

/// Find a box `X~` with `[X] + [0,h] * f(X~) ⊆ X~` by epsilon-inflation.
fn a_priori_box(field: &dyn VectorField, x: &IVector, h: f64, t: f64) -> Result<IVector> {
    let span = Interval::new(0.0, h)?;
    let mut candidate = x
        .add(&field.interval_eval(x).scale(&span))
        .inflate(INFLATE_REL, INFLATE_ABS);
    for retry in 0..=MAX_INFLATIONS {
        if !candidate.is_finite() {
            return Err(ReachError::EnclosureFailure { t, retries: retry });
        }
        let image = x.add(&field.interval_eval(&candidate).scale(&span));
        if candidate.contains(&image) {
            return Ok(candidate);
        }
        candidate = image.inflate(INFLATE_REL, INFLATE_ABS);
    }
    Err(ReachError::EnclosureFailure {
        t,
        retries: MAX_INFLATIONS,
    })
}

/// Row-sum norm of the entrywise magnitude of an interval matrix, nudged up.
fn mag_norm_inf(m: &IMatrix) -> f64 {
    let mag = m.mag();
    let norm = (0..mag.nrows())
        .map(|i| mag.row(i).iter().sum::<f64>())
        .fold(0.0, f64::max);
    norm * (1.0 + 1e-12) + 1e-300
}

/// Interval transition matrix `Phi ⊇ { transition matrices of d' = A(t) d,
/// A(t) in [A], over a span of length h }`: truncated interval exponential
/// series plus a tail bound on every entry.
fn transition_matrix(a: &IMatrix, h: f64) -> Result<IMatrix> {
    let n = a.rows();
    let ha = a.scale(&Interval::point(h));
    let alpha = h * mag_norm_inf(a);
    if !alpha.is_finite() {
        return Err(ReachError::InvalidInput("non-finite Jacobian bound".into()));
    }
    let order = (8usize).max((2.0 * alpha).ceil() as usize).min(40);

    let mut phi = IMatrix::identity(n);
    let mut term = IMatrix::identity(n);
    for k in 1..=order {
        let inv_k = Interval::point(1.0).div(&Interval::point(k as f64))?;
        term = term.mul(&ha)?.scale(&inv_k);
        phi = phi.add(&term);
    }
    // Tail: sum_{k > K} alpha^k / k! <= alpha^{K+1}/(K+1)! * 1/(1 - alpha/(K+2)).
    let mut head = 1.0f64;
    for k in 1..=(order + 1) {
        head = head * alpha / k as f64;
        head *= 1.0 + 1e-12;
    }
    let denom = 1.0 - alpha / (order + 2) as f64;
    if denom <= 0.0 {
        return Err(ReachError::InvalidInput(
            "transition series does not converge for this step".into(),
        ));
    }
    let tail = head / denom * (1.0 + 1e-10);
    let slop = Interval::centered(0.0, tail)?;
    let mut out = phi;
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, out.get(i, j).add(&slop));
        }
    }
    Ok(out)
}

/// One validated substep of length `h` starting at time `t`.
fn validated_substep(field: &dyn VectorField, state: &mut ValidatedState, t: f64, h: f64) -> Result<()> {
    let enclosure = a_priori_box(field, &state.x, h, t)?;

    // Midpoint trajectory: Taylor order 2 with the Lagrange remainder
    // evaluated on the midpoint's own a-priori box.
    let center = IVector::from_point(&state.x.mid());
    let center_box = a_priori_box(field, &center, h, t)?;
    let h_iv = Interval::point(h);
    let half_h_sq = h_iv.mul(&h_iv).scale(0.5);
    let second = field
        .interval_jacobian(&center_box)
        .mul_vec(&field.interval_eval(&center_box))?;
    let center_next = center
        .add(&field.interval_eval(&center).scale(&h_iv))
        .add(&second.scale(&half_h_sq));

    // Deviation from the midpoint and gradient enclosure both ride the
    // transition matrix of the interval Jacobian over the full a-priori box.
    let jac = field.interval_jacobian(&enclosure);
    let phi = transition_matrix(&jac, h)?;
    let deviation = state.x.sub(&center);
    let x_next = center_next.add(&phi.mul_vec(&deviation)?);

    let c_raw = phi.mul(&IMatrix::from_real(&state.q))?;
    let (q_next, c_fac) = lohner_qr_recondition(&c_raw)?;
    let g_next = c_fac.mul(&state.g)?;

    if !x_next.is_finite() || !g_next.is_finite() {
        return Err(ReachError::Blowup { t: t + h });
    }
    state.x = x_next;
    state.q = q_next;
    state.g = g_next;
    Ok(())
}

/// Advance a [`ValidatedState`] over `t_span` with substeps of at most
/// `max_step` (further subdivided when the Jacobian magnitude makes the
/// transition series slow to converge).
pub fn integrate_validated(
    field: &dyn VectorField,
    state: &mut ValidatedState,
    t_span: (f64, f64),
    max_step: f64,
) -> Result<()> {
    let (t_a, t_b) = t_span;
    if t_b < t_a {
        return Err(ReachError::InvalidInput(format!(
            "reversed time span [{t_a}, {t_b}]"
        )));
    }
    let mut t = t_a;
    while t < t_b - 1e-15 * t_b.abs().max(1.0) {
        let jac_scale = mag_norm_inf(&field.interval_jacobian(&state.x));
        let h_cap = if jac_scale > 0.0 {
            (0.4 / jac_scale).max(1e-6)
        } else {
            max_step
        };
        let h = max_step.min(h_cap).min(t_b - t);
        validated_substep(field, state, t, h)?;
        t += h;
    }
    Ok(())
}

/// Validated integration of state and gradient over `t_span`.
///
/// The returned pair encloses `{ chi(t_b, x) : x in X0 }` and
/// `{ F_x(t_b) * F0_member : x in X0 }` respectively.
pub fn solve_interval_augmented(
    field: &dyn VectorField,
    x0: &IVector,
    f0: &IMatrix,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<(IVector, IMatrix)> {
    if x0.dim() != field.dim() {
        return Err(ReachError::DimensionMismatch(format!(
            "model {} has dim {}, got box of dim {}",
            field.name(),
            field.dim(),
            x0.dim()
        )));
    }
    let step = match cfg.control {
        StepControl::Rk4Fixed { step } => step,
        // Validated integration always runs with a fixed substep.
        StepControl::Rk45Adaptive { .. } => 0.01,
    };
    let mut state = ValidatedState::new(x0.clone(), f0)?;
    integrate_validated(field, &mut state, t_span, step)?;
    Ok((state.x.clone(), state.gradient()))
}
