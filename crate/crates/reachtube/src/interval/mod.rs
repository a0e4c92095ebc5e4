//! Validated interval arithmetic on scalars, vectors, and matrices.
//!
//! Every operation is outward-rounded: the exact real-arithmetic image of the
//! operands is contained in the returned interval. Directed rounding is
//! implemented by composing nearest rounding with a one-ULP outward nudge on
//! each endpoint, which is deterministic across platforms and threads.

mod linalg;

pub use linalg::{
    imatrix_sigma_max_bound, lohner_qr_recondition, weighted_sigma_max_bound, IMatrix, IVector,
};

use crate::error::{ReachError, Result};

/// A closed real interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

/// Nudge down by one ULP.
#[inline]
fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

/// Nudge up by one ULP.
#[inline]
fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() {
            return Err(ReachError::InvalidInput(format!(
                "NaN interval endpoint: [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(ReachError::EmptyInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Zero-width interval at `x`.
    pub fn point(x: f64) -> Self {
        debug_assert!(!x.is_nan());
        Self { lo: x, hi: x }
    }

    pub fn zero() -> Self {
        Self::point(0.0)
    }

    /// Interval `mid ± rad`.
    pub fn centered(mid: f64, rad: f64) -> Result<Self> {
        if rad < 0.0 {
            return Err(ReachError::InvalidInput(format!("negative radius {rad}")));
        }
        Self::new(mid - rad, mid + rad)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn rad(&self) -> f64 {
        (0.5 * (self.hi - self.lo)).max(0.0)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Largest absolute value attained on the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Interval hull of `self` and `other`.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Widen by a relative factor plus an absolute amount, symmetric about the
    /// midpoint. Used by the epsilon-inflation schedule of the validated
    /// integrator.
    pub fn inflate(&self, rel: f64, abs: f64) -> Interval {
        let r = self.rad() * (1.0 + rel) + abs;
        let m = self.mid();
        Interval {
            lo: down(m - r),
            hi: up(m + r),
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval {
            lo: down(self.lo + other.lo),
            hi: up(self.hi + other.hi),
        }
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        Interval {
            lo: down(self.lo - other.hi),
            hi: up(self.hi - other.lo),
        }
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let products = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in products {
            // 0 * inf can yield NaN for degenerate unbounded operands; treat
            // the product as 0 in that case (one factor is exactly zero).
            let p = if p.is_nan() { 0.0 } else { p };
            lo = lo.min(p);
            hi = hi.max(p);
        }
        Interval {
            lo: down(lo),
            hi: up(hi),
        }
    }

    pub fn div(&self, other: &Interval) -> Result<Interval> {
        if other.contains(0.0) {
            return Err(ReachError::DivisionByZero {
                lo: other.lo,
                hi: other.hi,
            });
        }
        let quotients = [
            self.lo / other.lo,
            self.lo / other.hi,
            self.hi / other.lo,
            self.hi / other.hi,
        ];
        let lo = quotients.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = quotients.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Interval {
            lo: down(lo),
            hi: up(hi),
        })
    }

    /// Scale by an exact real number.
    pub fn scale(&self, c: f64) -> Interval {
        self.mul(&Interval::point(c))
    }

    pub fn exp(&self) -> Interval {
        Interval {
            lo: down(self.lo.exp()),
            hi: up(self.hi.exp()),
        }
    }

    pub fn tanh(&self) -> Interval {
        Interval {
            lo: down(self.lo.tanh()).max(-1.0),
            hi: up(self.hi.tanh()).min(1.0),
        }
    }

    /// Square, tightened at zero: the image of `x^2` is nonnegative.
    pub fn sqr(&self) -> Interval {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.contains(0.0) {
            Interval {
                lo: 0.0,
                hi: up(a.max(b)),
            }
        } else {
            Interval {
                lo: down(a.min(b)).max(0.0),
                hi: up(a.max(b)),
            }
        }
    }

    /// Integer power by repeated squaring on the endpoint structure.
    pub fn powi(&self, n: u32) -> Interval {
        match n {
            0 => Interval::point(1.0),
            1 => *self,
            _ => {
                let a = self.lo.powi(n as i32);
                let b = self.hi.powi(n as i32);
                if n % 2 == 0 {
                    if self.contains(0.0) {
                        Interval {
                            lo: 0.0,
                            hi: up(a.max(b)),
                        }
                    } else {
                        Interval {
                            lo: down(a.min(b)).max(0.0),
                            hi: up(a.max(b)),
                        }
                    }
                } else {
                    Interval {
                        lo: down(a),
                        hi: up(b),
                    }
                }
            }
        }
    }

    pub fn sin(&self) -> Interval {
        trig(self.lo, self.hi, f64::sin, std::f64::consts::FRAC_PI_2)
    }

    pub fn cos(&self) -> Interval {
        trig(self.lo, self.hi, f64::cos, 0.0)
    }
}

/// Enclosure of a trig function over `[lo, hi]`: endpoint values hulled with
/// any extrema `max_phase + k*pi` contained in the argument range.
///
/// `max_phase` is the location of the maximum in `[0, 2*pi)`: `pi/2` for sin,
/// `0` for cos; minima sit half a period away.
fn trig(lo: f64, hi: f64, f: fn(f64) -> f64, max_phase: f64) -> Interval {
    use std::f64::consts::PI;
    if hi - lo >= 2.0 * PI {
        return Interval { lo: -1.0, hi: 1.0 };
    }
    let mut vlo = f(lo).min(f(hi));
    let mut vhi = f(lo).max(f(hi));
    // Scan extrema max_phase + k*pi inside [lo, hi]. A small slop on the
    // endpoints guards against the extremum falling just outside due to
    // rounding of k*pi.
    let k0 = ((lo - max_phase) / PI).floor() as i64 - 1;
    let k1 = ((hi - max_phase) / PI).ceil() as i64 + 1;
    for k in k0..=k1 {
        let x = max_phase + (k as f64) * PI;
        if x >= lo - 1e-9 && x <= hi + 1e-9 {
            if k.rem_euclid(2) == 0 {
                vhi = 1.0;
            } else {
                vlo = -1.0;
            }
        }
    }
    Interval {
        lo: down(vlo).max(-1.0),
        hi: up(vhi).min(1.0),
    }
}
