//! Orbits with their stable/unstable frames, pseudo-orbits of points in Bowen balls,
//! and decay of unstable directions along them.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use super::{unstable_direction, DEFAULT_BURN_IN};
use crate::error::{KatokError, Result};
use crate::geometry::{frame, line_angle, TorusPoint};
use crate::katok::KatokMap;
use crate::stats::linear_fit;

/// Finite orbit `x_0, ..., x_{n-1}` with unit stable and unstable vectors at each point.
#[derive(Debug, Clone)]
pub struct OrbitFrame {
    pub points: Vec<TorusPoint>,
    pub unstable: Vec<Vector2<f64>>,
    pub stable: Vec<Vector2<f64>>,
    /// `dG(x_k)`.
    pub jacobians: Vec<Matrix2<f64>>,
}

/// Points of a Bowen ball around an orbit, given as an orbit-segment pseudo-orbit.
#[derive(Debug, Clone, Serialize)]
pub struct BowenBallSample {
    /// The pseudo-orbit `y_0, ..., y_{n-1}`.
    pub points: Vec<TorusPoint>,
    /// Length of the stable-direction deviation at each step.
    pub stable_dev: Vec<f64>,
    /// Length of the unstable-direction deviation at each step.
    pub unstable_dev: Vec<f64>,
    /// `max_k d(x_k, y_k)`.
    pub bowen_distance: f64,
}

/// Decomposition of `w` along `(eu, es)`.
#[inline]
fn split(w: &Vector2<f64>, eu: &Vector2<f64>, es: &Vector2<f64>) -> (f64, f64) {
    let m = Matrix2::from_columns(&[*eu, *es]);
    match m.try_inverse() {
        Some(inv) => {
            let c = inv * w;
            (c.x, c.y)
        }
        None => (0.0, 0.0),
    }
}

/// Deviations shorter than this are pushed by the derivative instead of the map,
/// which keeps their relative accuracy once they fall below coordinate resolution.
const LINEAR_REGIME: f64 = 1e-9;

impl OrbitFrame {
    pub fn new(g: &KatokMap, x: &TorusPoint, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(KatokError::Domain("orbit frame needs n >= 1".into()));
        }
        let tail = DEFAULT_BURN_IN;
        let mut points = Vec::with_capacity(n + tail);
        let mut jac = Vec::with_capacity(n + tail);
        let mut p = *x;
        for _ in 0..n + tail {
            let (q, m) = g.try_apply_with_jacobian(&p)?;
            points.push(p);
            jac.push(m);
            p = q;
        }
        let eu0 = unstable_direction(g, x, DEFAULT_BURN_IN)?;
        if !eu0.converged {
            return Err(KatokError::NonConvergence { change: f64::NAN, burn_in: eu0.burn_in });
        }
        let mut unstable = Vec::with_capacity(n);
        let mut v = eu0.direction();
        for m in &jac[..n] {
            unstable.push(v);
            v = m * v;
            v /= v.norm();
        }
        let mut stable = vec![Vector2::zeros(); n];
        let mut v = frame().e_s;
        for k in (0..n + tail - 1).rev() {
            let inv = jac[k].try_inverse().ok_or_else(|| KatokError::Domain("singular derivative".into()))?;
            v = inv * v;
            v /= v.norm();
            if k < n {
                stable[k] = v;
            }
        }
        points.truncate(n);
        jac.truncate(n);
        Ok(OrbitFrame { points, unstable, stable, jacobians: jac })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pseudo-orbit of a point displaced by `a` along the stable leaf at `x_0` and by `b`
    /// along the unstable leaf at `x_{n-1}`.
    ///
    /// The stable deviation is iterated forward by `G` and the unstable one backward by
    /// `G^-1`, each kept on its own line by dropping the transverse component.
    pub fn pseudo_orbit(&self, g: &KatokMap, a: f64, b: f64) -> Result<BowenBallSample> {
        let n = self.len();
        let x = &self.points;
        let mut ws = vec![0.0; n];
        let mut wsv = vec![Vector2::zeros(); n];
        let mut w = self.stable[0] * a;
        for k in 0..n {
            wsv[k] = w;
            ws[k] = w.norm();
            if k + 1 == n {
                break;
            }
            let d = if ws[k] < LINEAR_REGIME {
                self.jacobians[k] * w
            } else {
                g.try_apply(&x[k].offset(w))?.displacement_from(&x[k + 1])
            };
            let (_, cs) = split(&d, &self.unstable[k + 1], &self.stable[k + 1]);
            w = self.stable[k + 1] * cs;
        }
        let mut wv = vec![Vector2::zeros(); n];
        let mut vs = vec![0.0; n];
        let mut v = self.unstable[n - 1] * b;
        for k in (0..n).rev() {
            wv[k] = v;
            vs[k] = v.norm();
            if k == 0 {
                break;
            }
            let d = if vs[k] < LINEAR_REGIME {
                self.jacobians[k - 1].try_inverse().unwrap_or_else(Matrix2::identity) * v
            } else {
                g.try_apply_inv(&x[k].offset(v))?.displacement_from(&x[k - 1])
            };
            let (cu, _) = split(&d, &self.unstable[k - 1], &self.stable[k - 1]);
            v = self.unstable[k - 1] * cu;
        }
        let mut points = Vec::with_capacity(n);
        let mut worst = 0.0f64;
        for k in 0..n {
            let dev = wsv[k] + wv[k];
            worst = worst.max(dev.norm());
            points.push(x[k].offset(dev));
        }
        Ok(BowenBallSample { points, stable_dev: ws, unstable_dev: vs, bowen_distance: worst })
    }
}

/// Angles between unstable lines along an orbit and along a pseudo-orbit shadowing it,
/// with a fitted `d_k <= C (theta^k + theta^{n-1-k})` envelope.
#[derive(Debug, Clone, Serialize)]
pub struct GrassmannReport {
    pub distances: Vec<f64>,
    pub theta: f64,
    pub constant: f64,
    pub max_distance: f64,
    /// Whether the fitted envelope contracts (`theta < 1`) or the distances are negligible.
    pub holds: bool,
}

/// Distances `d(E^u(x_k), E^u(y_k))` for a pseudo-orbit `y` around the orbit frame `x`.
pub fn grassmann_decay_probe(g: &KatokMap, orbit: &OrbitFrame, sample: &BowenBallSample) -> Result<GrassmannReport> {
    let n = orbit.len();
    let start = unstable_direction(g, &sample.points[0], DEFAULT_BURN_IN)?;
    let mut e = start.direction();
    let mut distances = Vec::with_capacity(n);
    for k in 0..n {
        distances.push(line_angle(&orbit.unstable[k], &e));
        if k + 1 < n {
            e = g.try_jacobian(&sample.points[k])? * e;
            e /= e.norm();
        }
    }
    let max_distance = distances.iter().cloned().fold(0.0, f64::max);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, &d) in distances.iter().enumerate() {
        if d > 1e-13 {
            xs.push(k.min(n - 1 - k) as f64);
            ys.push(d.ln());
        }
    }
    let theta = if xs.len() >= 3 { linear_fit(&xs, &ys).map(|f| f.slope.exp()).unwrap_or(0.0) } else { 0.0 };
    let constant = distances
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let env = theta.powi(k as i32) + theta.powi((n - 1 - k) as i32);
            if env > 0.0 {
                d / env
            } else {
                d
            }
        })
        .fold(0.0, f64::max);
    let holds = theta < 1.0 || max_distance < 1e-8;
    Ok(GrassmannReport { distances, theta, constant, max_distance, holds })
}
