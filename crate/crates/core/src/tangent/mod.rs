//! Derivative cocycle, invariant cones, stable/unstable line fields, geometric
//! potentials and Lyapunov exponents.

mod leaves;
mod shadow;

pub use leaves::{bracket, trace_leaf, Bracket, LeafTracer};
pub use shadow::{grassmann_decay_probe, BowenBallSample, GrassmannReport, OrbitFrame};

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::geometry::{frame, line_angle, Dynamics, TorusPoint};
use crate::katok::{KatokMap, OrbitCursor};
use crate::parallel::{par_map, trial_rng};

pub use crate::params::beta_of_alpha;

/// Default power-method burn-in for line fields.
pub const DEFAULT_BURN_IN: usize = 200;
/// Largest burn-in tried before giving up.
pub const MAX_BURN_IN: usize = 3200;
/// Angle change below which a line field counts as converged.
pub const LINE_TOL: f64 = 1e-8;

/// A tangent vector with eigenframe components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentVector {
    pub base: TorusPoint,
    pub xi1: f64,
    pub xi2: f64,
}

impl TangentVector {
    pub fn plane(&self) -> Vector2<f64> {
        frame().from_eigen_vec(crate::geometry::EigenVec2::new(self.xi1, self.xi2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LineKind {
    Unstable,
    Stable,
}

/// Cone of slope `beta` around the `s1` axis (unstable) or the `s2` axis (stable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cone {
    pub slope: f64,
    pub kind: LineKind,
}

impl Cone {
    /// Signed margin `beta |major| - |minor|` of an eigen-coordinate vector, scaled by its norm.
    pub fn margin(&self, xi: &Vector2<f64>) -> f64 {
        let (major, minor) = match self.kind {
            LineKind::Unstable => (xi.x, xi.y),
            LineKind::Stable => (xi.y, xi.x),
        };
        (self.slope * major.abs() - minor.abs()) / xi.norm()
    }

    pub fn contains(&self, xi: &Vector2<f64>, slack: f64) -> bool {
        self.margin(xi) >= -slack
    }
}

/// Direction of the stable or unstable line at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineField {
    pub base: TorusPoint,
    /// Angle of the line from the expanding eigendirection, in `(-pi/2, pi/2]`.
    pub angle: f64,
    pub kind: LineKind,
    pub burn_in: usize,
    pub converged: bool,
}

impl LineField {
    /// Unit plane vector spanning the line.
    pub fn direction(&self) -> Vector2<f64> {
        let f = frame();
        f.e_u * self.angle.cos() + f.e_s * self.angle.sin()
    }

    fn from_plane(base: TorusPoint, v: &Vector2<f64>, kind: LineKind, burn_in: usize, converged: bool) -> Self {
        let f = frame();
        let (a, b) = (v.dot(&f.e_u), v.dot(&f.e_s));
        let mut angle = b.atan2(a);
        if angle > std::f64::consts::FRAC_PI_2 {
            angle -= std::f64::consts::PI;
        } else if angle <= -std::f64::consts::FRAC_PI_2 {
            angle += std::f64::consts::PI;
        }
        LineField { base, angle, kind, burn_in, converged }
    }
}

/// Report of [`cone_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest normalized margin seen (negative means outside the cone).
    pub worst_margin: f64,
    pub slope: f64,
}

/// Largest relative error `|FD - dG e| / |dG e|` of central differences with step `h`
/// against the variational derivative, over `samples` points of the switching disc
/// at distance at least `min_radius` from the origin.
pub fn derivative_check(g: &KatokMap, samples: usize, min_radius: f64, h: f64, seed: u64) -> Result<f64> {
    let r1 = g.params.r1;
    if !(min_radius < r1) {
        return Err(KatokError::Domain(format!("min_radius must be below r1 = {r1}")));
    }
    let rows: Vec<Result<f64>> = par_map(samples, |i| {
        let mut rng = trial_rng(seed, i as u64);
        // Uniform on the annulus between min_radius and 1.1 r1.
        let (a2, b2) = (min_radius * min_radius, (1.1 * r1).powi(2));
        let r = (a2 + (b2 - a2) * rng.gen::<f64>()).sqrt();
        let t = rng.gen::<f64>() * std::f64::consts::TAU;
        let x = TorusPoint::new(r * t.cos(), r * t.sin());
        let j = g.try_jacobian(&x)?;
        let mut worst = 0.0f64;
        for (col, e) in [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)].iter().enumerate() {
            let fp = g.try_apply(&x.offset(e * h))?;
            let fm = g.try_apply(&x.offset(-e * h))?;
            let fd = fp.displacement_from(&fm) / (2.0 * h);
            let exact = j.column(col).into_owned();
            worst = worst.max((fd - exact).norm() / exact.norm());
        }
        Ok(worst)
    });
    rows.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

/// Push cone-boundary vectors by `dG` (unstable cone) and `dG^-1` (stable cone) at
/// random points and count images leaving the cone.
///
/// Half of the points are drawn uniformly from the switching disc, where `dG`
/// differs from `A`, the rest uniformly from the torus.
pub fn cone_check(g: &KatokMap, samples: usize, slope: f64, seed: u64) -> Result<ConeReport> {
    let r1 = g.params.r1;
    let f = frame();
    let rows: Vec<Result<(usize, f64)>> = par_map(samples, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let x = if i % 2 == 0 {
            let r = r1 * rng.gen::<f64>().sqrt();
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            TorusPoint::new(r * a.cos(), r * a.sin())
        } else {
            TorusPoint::new(rng.gen(), rng.gen())
        };
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let m = f.matrix_to_eigen(&g.try_jacobian(&x)?);
        let inv = m.try_inverse().ok_or_else(|| KatokError::Domain("singular derivative".into()))?;
        let un = Cone { slope, kind: LineKind::Unstable };
        let st = Cone { slope, kind: LineKind::Stable };
        let mu = un.margin(&(m * Vector2::new(1.0, sign * slope)));
        let ms = st.margin(&(inv * Vector2::new(sign * slope, 1.0)));
        let worst = mu.min(ms);
        Ok((usize::from(mu < -1e-10) + usize::from(ms < -1e-10), worst))
    });
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    for r in rows {
        let (v, w) = r?;
        violations += v;
        worst_margin = worst_margin.min(w);
    }
    Ok(ConeReport { samples, violations, worst_margin, slope })
}

fn push_unstable<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, burn_in: usize) -> Vector2<f64> {
    let mut back = Vec::with_capacity(burn_in + 1);
    let mut p = *x;
    back.push(p);
    for _ in 0..burn_in {
        p = map.apply_inv(&p);
        back.push(p);
    }
    let mut v = frame().e_u;
    for k in (1..=burn_in).rev() {
        v = map.jacobian(&back[k]) * v;
        v /= v.norm();
    }
    v
}

fn push_stable<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, burn_in: usize) -> Vector2<f64> {
    let mut fwd = Vec::with_capacity(burn_in + 1);
    let mut p = *x;
    fwd.push(p);
    for _ in 0..burn_in {
        p = map.apply(&p);
        fwd.push(p);
    }
    let mut v = frame().e_s;
    for k in (0..burn_in).rev() {
        let m = map.jacobian(&fwd[k]);
        v = m.try_inverse().unwrap_or_else(Matrix2::identity) * v;
        v /= v.norm();
    }
    v
}

fn converge_line<D: Dynamics + ?Sized>(
    map: &D,
    x: &TorusPoint,
    kind: LineKind,
    burn_in: usize,
    tol: f64,
) -> Result<LineField> {
    if burn_in == 0 {
        return Err(KatokError::Domain("burn_in must be at least 1".into()));
    }
    let push = |b: usize| match kind {
        LineKind::Unstable => push_unstable(map, x, b),
        LineKind::Stable => push_stable(map, x, b),
    };
    let mut b = burn_in;
    let mut prev = push(b);
    loop {
        let next = push(2 * b);
        let change = line_angle(&prev, &next);
        if change < tol {
            return Ok(LineField::from_plane(*x, &next, kind, 2 * b, true));
        }
        if 2 * b >= MAX_BURN_IN.max(burn_in) {
            return Ok(LineField::from_plane(*x, &next, kind, 2 * b, false));
        }
        prev = next;
        b *= 2;
    }
}

/// Unstable line at `x`: the expanding eigendirection pushed forward from `G^-burn_in(x)`.
///
/// At the origin, where `dG = Id`, this returns the expanding eigendirection by convention.
pub fn unstable_direction<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, burn_in: usize) -> Result<LineField> {
    converge_line(map, x, LineKind::Unstable, burn_in, LINE_TOL)
}

/// Stable line at `x`: the contracting eigendirection pulled back from `G^burn_in(x)`.
pub fn stable_direction<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, burn_in: usize) -> Result<LineField> {
    converge_line(map, x, LineKind::Stable, burn_in, LINE_TOL)
}

/// Line field with a caller-chosen starting burn-in and tolerance (used by leaf tracing).
pub fn line_direction<D: Dynamics + ?Sized>(
    map: &D,
    x: &TorusPoint,
    kind: LineKind,
    burn_in: usize,
    tol: f64,
) -> Result<LineField> {
    converge_line(map, x, kind, burn_in, tol)
}

pub(crate) fn require_converged(l: Result<LineField>) -> Result<LineField> {
    let l = l?;
    if l.converged {
        Ok(l)
    } else {
        Err(KatokError::NonConvergence { change: f64::NAN, burn_in: l.burn_in })
    }
}

/// `phi_geo(x) = -log |dG(x)|_{E^u(x)}|`.
pub fn geo_potential_g(g: &KatokMap, x: &TorusPoint) -> Result<f64> {
    let e = require_converged(unstable_direction(g, x, DEFAULT_BURN_IN))?.direction();
    Ok(-(g.try_jacobian(x)? * e).norm().ln())
}

/// Birkhoff sum of `phi_geo` along `n` steps from a cursor with a unit unstable vector.
///
/// Returns the sum, the final cursor and the final unit vector.
pub fn geo_sum_along(
    g: &KatokMap,
    start: OrbitCursor,
    e: Vector2<f64>,
    n: usize,
) -> Result<(f64, OrbitCursor, Vector2<f64>)> {
    let mut c = start;
    let mut v = e / e.norm();
    let mut sum = 0.0;
    for _ in 0..n {
        let (next, w) = c.step_tangent(g, &v)?;
        let s = w.norm();
        sum -= s.ln();
        v = w / s;
        c = next;
    }
    Ok((sum, c, v))
}

/// Finite-time Lyapunov exponent `-(1/n) S_n phi_geo(x)`.
pub fn lyapunov(g: &KatokMap, x: &TorusPoint, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(KatokError::Domain("lyapunov needs n >= 1".into()));
    }
    let e = require_converged(unstable_direction(g, x, DEFAULT_BURN_IN))?.direction();
    let (sum, _, _) = geo_sum_along(g, OrbitCursor::at(*x), e, n)?;
    Ok(-sum / n as f64)
}

/// Exponent from the backward cocycle along the stable line at `y`:
/// `(1/n) log |dG^-n(y)|_{E^s(y)}|`, equal to the positive exponent for regular points.
pub fn lyapunov_backward(g: &KatokMap, y: &TorusPoint, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(KatokError::Domain("lyapunov_backward needs n >= 1".into()));
    }
    let mut v = require_converged(stable_direction(g, y, DEFAULT_BURN_IN))?.direction();
    let mut p = *y;
    let mut sum = 0.0;
    for _ in 0..n {
        let q = g.try_apply_inv(&p)?;
        let m = g.try_jacobian(&q)?;
        let w = m.try_inverse().ok_or_else(|| KatokError::Domain("singular derivative".into()))? * v;
        let s = w.norm();
        sum += s.ln();
        v = w / s;
        p = q;
    }
    Ok(sum / n as f64)
}

/// Per-step terms of `S_n phi_geo` for `G~` at `x`, via the coboundary relation
/// `phi~(G~^i x) = phi(z_i) - log|D phi(z_{i+1}) e_{i+1}| + log|D phi(z_i) e_i|`
/// with `z_i = G^i(phi^-1 x)` and `e_i` the unit unstable vectors along that orbit.
pub fn geo_potential_tilde_terms(g: &KatokMap, x: &TorusPoint, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let z = g.phi_inv(x);
    if z == TorusPoint::ORIGIN {
        return Ok(vec![0.0; n]);
    }
    let mut e = require_converged(unstable_direction(g, &z, DEFAULT_BURN_IN))?.direction();
    let mut c = OrbitCursor::at(z);
    let mut terms = Vec::with_capacity(n);
    let mut boundary = (g.phi_jacobian(&c.point) * e).norm().ln();
    for _ in 0..n {
        let (next, w) = c.step_tangent(g, &e)?;
        let s = w.norm();
        e = w / s;
        let nb = (g.phi_jacobian(&next.point) * e).norm().ln();
        terms.push(-s.ln() - nb + boundary);
        boundary = nb;
        c = next;
    }
    Ok(terms)
}

/// `S_n phi_geo` for `G~`, telescoped through the coboundary relation.
pub fn geo_potential_tilde_sum(g: &KatokMap, x: &TorusPoint, n: usize) -> Result<f64> {
    let mut acc = 0.0;
    for t in geo_potential_tilde_terms(g, x, n)? {
        acc += t;
    }
    Ok(acc)
}

/// Prefix sums `S_0, ..., S_n` of the same terms, so that `S_n = S_{n-1} + term_{n-1}` holds exactly.
pub fn geo_potential_tilde_prefix(g: &KatokMap, x: &TorusPoint, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for t in geo_potential_tilde_terms(g, x, n)? {
        acc += t;
        out.push(acc);
    }
    Ok(out)
}
