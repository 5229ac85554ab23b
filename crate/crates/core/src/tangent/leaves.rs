//! Tracing stable and unstable leaves by integrating the line fields, and the
//! local product bracket `[x, y] = W^s_loc(x) ∩ W^u_loc(y)`.

use nalgebra::Vector2;
use serde::Serialize;

use super::{line_direction, LineKind};
use crate::error::{KatokError, Result};
use crate::geometry::{frame, torus_dist, Dynamics, TorusPoint};
use crate::params::MapParams;

/// Step and accuracy settings for leaf tracing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeafTracer {
    /// Largest arclength step of the midpoint integrator.
    pub step: f64,
    /// Leaf length factor: leaves of length `2 gamma d` are traced for points at distance `d`.
    pub gamma: f64,
    /// Starting burn-in of the line field power method (doubled until converged).
    pub burn_in: usize,
    /// Angle change accepted as converged.
    pub tol: f64,
}

impl LeafTracer {
    pub fn for_params(p: &MapParams) -> Self {
        LeafTracer { step: p.epsilon / 50.0, gamma: p.gamma, burn_in: 24, tol: 1e-11 }
    }

    fn direction<D: Dynamics + ?Sized>(
        &self,
        map: &D,
        p: &TorusPoint,
        kind: LineKind,
        along: &Vector2<f64>,
    ) -> Result<Vector2<f64>> {
        let l = line_direction(map, p, kind, self.burn_in, self.tol)?;
        if !l.converged {
            return Err(KatokError::NonConvergence { change: f64::NAN, burn_in: l.burn_in });
        }
        let d = l.direction();
        Ok(if d.dot(along) < 0.0 { -d } else { d })
    }
}

/// Points along the leaf of `kind` through `x`, spaced by at most `tracer.step`.
///
/// A positive `length` moves in the direction with positive component along the
/// matching eigendirection.  The first point is `x`.
pub fn trace_leaf<D: Dynamics + ?Sized>(
    map: &D,
    x: &TorusPoint,
    kind: LineKind,
    length: f64,
    tracer: &LeafTracer,
) -> Result<Vec<TorusPoint>> {
    let f = frame();
    let axis = match kind {
        LineKind::Unstable => f.e_u,
        LineKind::Stable => f.e_s,
    };
    let mut along = if length < 0.0 { -axis } else { axis };
    let steps = (length.abs() / tracer.step).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(*x);
    if steps == 0 {
        return Ok(out);
    }
    let h = length.abs() / steps as f64;
    let mut p = *x;
    for _ in 0..steps {
        let d1 = tracer.direction(map, &p, kind, &along)?;
        let mid = p.offset(d1 * (h / 2.0));
        let d2 = tracer.direction(map, &mid, kind, &d1)?;
        p = p.offset(d2 * h);
        along = d2;
        out.push(p);
    }
    Ok(out)
}

/// Result of a bracket computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub point: TorusPoint,
    /// Signed arclength from `x` to the bracket along the stable leaf of `x`.
    pub stable_arc: f64,
    /// Signed arclength from `y` to the bracket along the unstable leaf of `y`.
    pub unstable_arc: f64,
}

/// A leaf as a graph over one chart coordinate, with arclength at every node.
struct LeafGraph {
    /// Parameter coordinate (increasing).
    keys: Vec<f64>,
    /// Graph coordinate.
    vals: Vec<f64>,
    arcs: Vec<f64>,
}

impl LeafGraph {
    fn build(
        map: &(impl Dynamics + ?Sized),
        through: &TorusPoint,
        center: &TorusPoint,
        kind: LineKind,
        half_length: f64,
        tracer: &LeafTracer,
    ) -> Result<Self> {
        let f = frame();
        let fwd = trace_leaf(map, through, kind, half_length, tracer)?;
        let bwd = trace_leaf(map, through, kind, -half_length, tracer)?;
        let h = |pts: &[TorusPoint]| -> Vec<f64> {
            let mut acc = vec![0.0];
            for w in pts.windows(2) {
                let last = *acc.last().unwrap();
                acc.push(last + w[1].displacement_from(&w[0]).norm());
            }
            acc
        };
        let (af, ab) = (h(&fwd), h(&bwd));
        let node = |p: &TorusPoint, arc: f64| {
            let s = f.to_eigen_vec(p.displacement_from(center));
            match kind {
                LineKind::Stable => (s.s2, s.s1, arc),
                LineKind::Unstable => (s.s1, s.s2, arc),
            }
        };
        let mut nodes: Vec<(f64, f64, f64)> = Vec::with_capacity(fwd.len() + bwd.len());
        for (p, a) in bwd.iter().zip(&ab).skip(1).rev() {
            nodes.push(node(p, -a));
        }
        for (p, a) in fwd.iter().zip(&af) {
            nodes.push(node(p, *a));
        }
        for w in nodes.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(KatokError::NoIntersection("leaf is not a graph over its axis".into()));
            }
        }
        Ok(LeafGraph {
            keys: nodes.iter().map(|n| n.0).collect(),
            vals: nodes.iter().map(|n| n.1).collect(),
            arcs: nodes.iter().map(|n| n.2).collect(),
        })
    }

    fn range(&self) -> (f64, f64) {
        (self.keys[0], *self.keys.last().unwrap())
    }

    /// Linear interpolation of `(value, arc)` at `key`.
    fn at(&self, key: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.range();
        if key < lo || key > hi {
            return None;
        }
        let i = match self.keys.partition_point(|&k| k <= key) {
            0 => 0,
            i if i >= self.keys.len() => self.keys.len() - 2,
            i => i - 1,
        };
        let t = (key - self.keys[i]) / (self.keys[i + 1] - self.keys[i]);
        let lerp = |v: &[f64]| v[i] + t * (v[i + 1] - v[i]);
        Some((lerp(&self.vals), lerp(&self.arcs)))
    }
}

/// `[x, y]`: the intersection of the stable leaf through `x` with the unstable leaf through `y`.
///
/// Both leaves are traced to length `2 gamma d(x, y)` on each side and intersected as
/// graphs in the eigen chart at `x`.  Fails with `NoIntersection` when the traced
/// pieces do not cross.
pub fn bracket<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, y: &TorusPoint, tracer: &LeafTracer) -> Result<Bracket> {
    let d = torus_dist(x, y);
    if d == 0.0 {
        return Ok(Bracket { point: *x, stable_arc: 0.0, unstable_arc: 0.0 });
    }
    let half = 2.0 * tracer.gamma * d;
    let local = LeafTracer { step: tracer.step.min(half / 32.0), ..*tracer };
    let stable = LeafGraph::build(map, x, x, LineKind::Stable, half, &local)?;
    let unstable = LeafGraph::build(map, y, x, LineKind::Unstable, half, &local)?;
    // h(b) = g(f(b)) - b, with f the stable graph (s1 over s2) and g the unstable graph (s2 over s1).
    let h = |b: f64| -> Option<f64> {
        let (a, _) = stable.at(b)?;
        let (gb, _) = unstable.at(a)?;
        Some(gb - b)
    };
    let mut bracket_lo = None;
    let mut prev: Option<(f64, f64)> = None;
    for &b in &stable.keys {
        let Some(v) = h(b) else {
            prev = None;
            continue;
        };
        if v == 0.0 {
            bracket_lo = Some((b, b));
            break;
        }
        if let Some((pb, pv)) = prev {
            if pv.signum() != v.signum() {
                bracket_lo = Some((pb, b));
                break;
            }
        }
        prev = Some((b, v));
    }
    let (mut lo, mut hi) =
        bracket_lo.ok_or_else(|| KatokError::NoIntersection(format!("leaves of length {half:.3e} do not cross")))?;
    let sign_lo = h(lo).unwrap().signum();
    for _ in 0..100 {
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match h(mid) {
            Some(v) if v.signum() == sign_lo => lo = mid,
            Some(_) => hi = mid,
            None => break,
        }
    }
    let b = 0.5 * (lo + hi);
    let (a, stable_arc) = stable.at(b).unwrap();
    let (_, unstable_arc) = unstable.at(a).unwrap();
    let f = frame();
    let point = x.offset(f.from_eigen_vec(crate::geometry::EigenVec2::new(a, b)));
    Ok(Bracket { point, stable_arc, unstable_arc })
}
