//! One-dimensional interpolants: monotone piecewise cubic (Fritsch–Carlson)
//! and natural cubic splines.

use crate::error::{RemError, Result};
use crate::scalar::Real;

fn check_nodes<T: Real>(x: &[T], y: &[T], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(RemError::InvalidInput("node arrays differ in length".into()));
    }
    if x.len() < min {
        return Err(RemError::InsufficientData { needed: min, got: x.len() });
    }
    if x.windows(2).any(|w| !(w[0] < w[1])) || y.iter().any(|v| !v.is_finite()) {
        return Err(RemError::InvalidInput("nodes must be strictly ascending and finite".into()));
    }
    Ok(())
}

/// Index `i` of the interval `[x[i], x[i+1]]` containing `t`, clamped to the ends.
fn interval<T: Real>(x: &[T], t: T) -> usize {
    x.partition_point(|v| *v <= t).saturating_sub(1).min(x.len() - 2)
}

/// Monotone piecewise cubic Hermite interpolant with linear extension
/// beyond the end nodes along the end secants.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip<T = f64> {
    x: Vec<T>,
    y: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> Pchip<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        check_nodes(&x, &y, 2)?;
        let n = x.len();
        let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![T::zero(); n];
        if n == 2 {
            d.fill(delta[0]);
        } else {
            for i in 1..n - 1 {
                let (a, b) = (delta[i - 1], delta[i]);
                if a * b > T::zero() {
                    // Weighted harmonic mean keeps the interpolant monotone.
                    let w1 = T::lit(2.0) * h[i] + h[i - 1];
                    let w2 = h[i] + T::lit(2.0) * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / a + w2 / b);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn nodes(&self) -> (&[T], &[T]) {
        (&self.x, &self.y)
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.x.len();
        if t <= self.x[0] {
            let s = (self.y[1] - self.y[0]) / (self.x[1] - self.x[0]);
            return self.y[0] + s * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            let s = (self.y[n - 1] - self.y[n - 2]) / (self.x[n - 1] - self.x[n - 2]);
            return self.y[n - 1] + s * (t - self.x[n - 1]);
        }
        let i = interval(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (one, two, three) = (T::one(), T::lit(2.0), T::lit(3.0));
        let h00 = (one + two * s) * (one - s) * (one - s);
        let h10 = s * (one - s) * (one - s);
        let h01 = s * s * (three - two * s);
        let h11 = s * s * (s - one);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// Three-point end derivative, limited to preserve monotonicity.
fn end_slope<T: Real>(h0: T, h1: T, del0: T, del1: T) -> T {
    let d = ((T::lit(2.0) * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= T::zero() {
        T::zero()
    } else if del0 * del1 <= T::zero() && d.abs() > T::lit(3.0) * del0.abs() {
        T::lit(3.0) * del0
    } else {
        d
    }
}

/// Natural cubic spline (zero second derivative at both ends), constant
/// beyond the end nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline<T = f64> {
    x: Vec<T>,
    y: Vec<T>,
    m: Vec<T>,
}

impl<T: Real> NaturalSpline<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        check_nodes(&x, &y, 1)?;
        let m = second_derivatives(&x, &y);
        Ok(Self { x, y, m })
    }

    /// Evaluates at `t`, holding the end values outside `[x_0, x_{n-1}]`.
    pub fn eval(&self, t: T) -> T {
        eval_natural(&self.x, &self.y, &self.m, t)
    }
}

/// Second derivatives of the natural cubic spline through `(x, y)`, by the
/// tridiagonal (Thomas) solve.
pub(crate) fn second_derivatives<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let mut m = vec![T::zero(); n];
    if n < 3 {
        return m;
    }
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let mut c_prime = vec![T::zero(); n];
    let mut d_prime = vec![T::zero(); n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let rhs = six * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let diag = two * (h0 + h1) - h0 * c_prime[i - 1];
        c_prime[i] = h1 / diag;
        d_prime[i] = (rhs - h0 * d_prime[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

pub(crate) fn eval_natural<T: Real>(x: &[T], y: &[T], m: &[T], t: T) -> T {
    let n = x.len();
    if n == 1 || t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let i = interval(x, t);
    let h = x[i + 1] - x[i];
    let a = (x[i + 1] - t) / h;
    let b = (t - x[i]) / h;
    let six = T::lit(6.0);
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / six
}
