//! Classical RK4 integration of the slowed linear flow and its variational equation.
//!
//! In eigen coordinates the field is `c psi(|s|^2) (s1, -s2)` with `c = log lambda`.
//! The product `s1 s2` is a first integral; each RK4 step is halved until the
//! product drifts by less than [`PRODUCT_DRIFT_TOL`] relative.

use nalgebra::{Matrix2, Vector2};

use super::profile::SlowProfile;
use crate::error::{KatokError, Result};
use crate::geometry::EigenVec2;

/// Relative drift of `s1 s2` tolerated per RK4 step.
pub const PRODUCT_DRIFT_TOL: f64 = 1e-10;
/// Maximum number of step halvings.
pub const MAX_HALVINGS: u32 = 24;

/// Slowed flow in the eigen chart at the origin.
#[derive(Debug, Clone, Copy)]
pub struct SlowFlow<'a> {
    pub profile: &'a SlowProfile,
    pub rate: f64,
    pub step: f64,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

impl<'a> SlowFlow<'a> {
    /// Field of the point and of `(N-2)/2` tangent columns riding along.
    #[inline]
    fn field<const N: usize>(&self, y: &[f64; N]) -> [f64; N] {
        let (s1, s2) = (y[0], y[1]);
        let u = s1 * s1 + s2 * s2;
        let (p, dp) = self.profile.value_and_slope(u);
        let c = self.rate;
        let mut out = [0.0; N];
        out[0] = c * p * s1;
        out[1] = -c * p * s2;
        if N > 2 {
            let j11 = c * (p + 2.0 * s1 * s1 * dp);
            let j12 = c * 2.0 * s1 * s2 * dp;
            let j21 = -j12;
            let j22 = -c * (p + 2.0 * s2 * s2 * dp);
            let mut i = 2;
            while i + 1 < N {
                let (a, b) = (y[i], y[i + 1]);
                out[i] = j11 * a + j12 * b;
                out[i + 1] = j21 * a + j22 * b;
                i += 2;
            }
        }
        out
    }

    #[inline]
    fn rk4<const N: usize>(&self, y: &[f64; N], h: f64) -> [f64; N] {
        let k1 = self.field(y);
        let k2 = self.field(&axpy(y, h / 2.0, &k1));
        let k3 = self.field(&axpy(y, h / 2.0, &k2));
        let k4 = self.field(&axpy(y, h, &k3));
        let mut out = *y;
        for i in 0..N {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    fn advance<const N: usize>(&self, y: &[f64; N], h: f64, depth: u32) -> Result<[f64; N]> {
        let next = self.rk4(y, h);
        let p0 = y[0] * y[1];
        let p1 = next[0] * next[1];
        if (p1 - p0).abs() <= PRODUCT_DRIFT_TOL * p0.abs() || p0 == 0.0 {
            return Ok(next);
        }
        if depth >= MAX_HALVINGS {
            return Err(KatokError::IntegratorFailure { s1: y[0], s2: y[1] });
        }
        let mid = self.advance(y, h / 2.0, depth + 1)?;
        self.advance(&mid, h / 2.0, depth + 1)
    }

    /// Whether the unperturbed linear path over time `t` avoids the slowed disc.
    #[inline]
    pub fn linear_path_clear(&self, s: &EigenVec2, t: f64) -> bool {
        let r0 = self.profile.r0;
        let (a, b) = (s.s1 * s.s1, s.s2 * s.s2);
        let e = (2.0 * self.rate * t).exp();
        let end = a * e + b / e;
        let start = a + b;
        if start < r0 || end < r0 {
            return false;
        }
        if a > 0.0 && b > 0.0 {
            let crit = (b / a).ln() / (4.0 * self.rate);
            let (lo, hi) = if t >= 0.0 { (0.0, t) } else { (t, 0.0) };
            if crit > lo && crit < hi {
                return 2.0 * (s.s1 * s.s2).abs() >= r0;
            }
        }
        true
    }

    fn integrate<const N: usize>(&self, y0: [f64; N], t: f64) -> Result<[f64; N]> {
        let steps = (t.abs() / self.step).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let mut y = y0;
        for _ in 0..steps {
            y = self.advance(&y, h, 0)?;
        }
        Ok(y)
    }

    /// Forward flow on the unstable axis.
    ///
    /// Inside the pure power zone `s1^2 <= r0/2` the solution is explicit:
    /// `|s1|^(-2 alpha)` decreases linearly at rate `2 alpha c r0^(-alpha)`. Outside
    /// `s1^2 >= r0` the flow is linear. Only the blend annulus is stepped with RK4.
    /// Returns the image and the multipliers of the two tangent components, which
    /// for a scalar autonomous flow are `f(s1')/f(s1)` and `s1/s1'`.
    fn axis_flow(&self, v0: f64, t: f64) -> (f64, f64, f64) {
        let c = self.rate;
        let (r0, alpha) = (self.profile.r0, self.profile.alpha);
        let sign = v0.signum();
        let mut v = v0.abs();
        if v == 0.0 {
            return (0.0, 1.0, 1.0);
        }
        let inner = (r0 / 2.0).sqrt();
        let outer = r0.sqrt();
        let speed = 2.0 * alpha * c * r0.powf(-alpha);
        let mut left = t;
        while left > 0.0 {
            if v < inner {
                let w = v.powf(-2.0 * alpha);
                let exit = (w - inner.powf(-2.0 * alpha)) / speed;
                if exit >= left {
                    v = (w - speed * left).powf(-1.0 / (2.0 * alpha));
                    left = 0.0;
                } else {
                    v = inner;
                    left -= exit;
                }
            } else if v >= outer {
                v *= (c * left).exp();
                left = 0.0;
            } else {
                let h = self.step.min(left);
                let f = |x: f64| c * self.profile.value_and_slope(x * x).0 * x;
                let k1 = f(v);
                let k2 = f(v + h / 2.0 * k1);
                let k3 = f(v + h / 2.0 * k2);
                let k4 = f(v + h * k3);
                v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                left -= h;
            }
        }
        let f = |x: f64| self.profile.value_and_slope(x * x).0 * x;
        let start = v0.abs();
        (sign * v, f(v) / f(start), start / v)
    }

    /// Time-`t` image of `s`.
    pub fn flow(&self, s: &EigenVec2, t: f64) -> Result<EigenVec2> {
        if self.linear_path_clear(s, t) {
            let e = (self.rate * t).exp();
            return Ok(EigenVec2::new(s.s1 * e, s.s2 / e));
        }
        if s.s2 == 0.0 && t > 0.0 {
            return Ok(EigenVec2::new(self.axis_flow(s.s1, t).0, 0.0));
        }
        let y = self.integrate([s.s1, s.s2], t)?;
        Ok(EigenVec2::new(y[0], y[1]))
    }

    /// Time-`t` image together with the derivative of the flow (eigen coordinates).
    pub fn flow_with_jacobian(&self, s: &EigenVec2, t: f64) -> Result<(EigenVec2, Matrix2<f64>)> {
        if self.linear_path_clear(s, t) {
            let e = (self.rate * t).exp();
            return Ok((EigenVec2::new(s.s1 * e, s.s2 / e), Matrix2::new(e, 0.0, 0.0, 1.0 / e)));
        }
        let y = self.integrate([s.s1, s.s2, 1.0, 0.0, 0.0, 1.0], t)?;
        Ok((EigenVec2::new(y[0], y[1]), Matrix2::new(y[2], y[4], y[3], y[5])))
    }

    /// Time-`t` image together with one pushed tangent vector (eigen coordinates).
    pub fn flow_with_tangent(&self, s: &EigenVec2, xi: &Vector2<f64>, t: f64) -> Result<(EigenVec2, Vector2<f64>)> {
        if self.linear_path_clear(s, t) {
            let e = (self.rate * t).exp();
            return Ok((EigenVec2::new(s.s1 * e, s.s2 / e), Vector2::new(xi.x * e, xi.y / e)));
        }
        if s.s2 == 0.0 && t > 0.0 {
            let (v, m1, m2) = self.axis_flow(s.s1, t);
            return Ok((EigenVec2::new(v, 0.0), Vector2::new(xi.x * m1, xi.y * m2)));
        }
        let y = self.integrate([s.s1, s.s2, xi.x, xi.y], t)?;
        Ok((EigenVec2::new(y[0], y[1]), Vector2::new(y[2], y[3])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_flow_matches_stepped_integration() {
        let profile = SlowProfile::new(0.1, 1e-4, 1e-12).unwrap();
        let flow = SlowFlow { profile: &profile, rate: crate::geometry::frame().log_lambda, step: 1.0 / 1024.0 };
        for &v0 in &[1e-9, 3e-6, -4e-4, 2e-3, 7.1e-3, 9e-3, 2e-2] {
            for &t in &[0.3, 1.0, 2.5] {
                let (v, m1, m2) = flow.axis_flow(v0, t);
                let y = flow.integrate([v0, 0.0, 1.0, 0.0, 0.0, 1.0], t).unwrap();
                assert!((v - y[0]).abs() <= 1e-9 * y[0].abs(), "{v0} {t}: {v} vs {}", y[0]);
                assert!((m1 - y[2]).abs() <= 1e-8 * y[2].abs(), "{v0} {t}: {m1} vs {}", y[2]);
                assert!((m2 - y[5]).abs() <= 1e-8 * y[5].abs(), "{v0} {t}: {m2} vs {}", y[5]);
            }
        }
    }
}
