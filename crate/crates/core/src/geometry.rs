//! Torus arithmetic, the eigenframe of the cat matrix, flat and Bowen metrics.

use std::sync::LazyLock;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{KatokError, Result};

/// Radius of the eigen chart around an arbitrary center.
pub const CHART_RADIUS: f64 = 0.25;

/// Reduce a real into `[0, 1)`.
///
/// `rem_euclid` can return exactly `1.0` for tiny negative inputs, so that case
/// is folded back to zero.
#[inline]
pub fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of `d` modulo 1 in `[-1/2, 1/2)`.
#[inline]
pub fn wrap_signed(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

/// A point of the flat torus with coordinates reduced into `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub u: f64,
    pub v: f64,
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint { u: 0.0, v: 0.0 };

    #[inline]
    pub fn new(u: f64, v: f64) -> Self {
        TorusPoint { u: reduce_unit(u), v: reduce_unit(v) }
    }

    /// Project a point of the plane onto the torus.
    #[inline]
    pub fn from_plane(p: Vector2<f64>) -> Self {
        Self::new(p.x, p.y)
    }

    /// Shortest displacement from `center` to `self`, as a vector in the plane.
    #[inline]
    pub fn displacement_from(&self, center: &TorusPoint) -> Vector2<f64> {
        Vector2::new(wrap_signed(self.u - center.u), wrap_signed(self.v - center.v))
    }

    /// The lift of `self` nearest to the origin of the plane.
    #[inline]
    pub fn lift(&self) -> Vector2<f64> {
        Vector2::new(wrap_signed(self.u), wrap_signed(self.v))
    }

    /// Translate by a plane vector.
    #[inline]
    pub fn offset(&self, d: Vector2<f64>) -> Self {
        Self::new(self.u + d.x, self.v + d.y)
    }

    /// Distance to the fixed point at the origin.
    #[inline]
    pub fn norm_from_origin(&self) -> f64 {
        self.lift().norm()
    }
}

/// Flat torus distance: minimum over integer translates of the Euclidean distance.
#[inline]
pub fn torus_dist(x: &TorusPoint, y: &TorusPoint) -> f64 {
    y.displacement_from(x).norm()
}

/// Coordinates along the expanding (`s1`) and contracting (`s2`) eigendirections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenVec2 {
    pub s1: f64,
    pub s2: f64,
}

impl EigenVec2 {
    pub const ZERO: EigenVec2 = EigenVec2 { s1: 0.0, s2: 0.0 };

    #[inline]
    pub fn new(s1: f64, s2: f64) -> Self {
        EigenVec2 { s1, s2 }
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.s1 * self.s1 + self.s2 * self.s2
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.s1, self.s2)
    }
}

/// Eigen-decomposition of `A = [[2,1],[1,1]]`, from `x^2 - 3x + 1 = 0` in closed form.
#[derive(Debug, Clone)]
pub struct Eigenframe {
    pub lambda: f64,
    pub log_lambda: f64,
    /// Unit expanding eigenvector.
    pub e_u: Vector2<f64>,
    /// Unit contracting eigenvector, a quarter turn counterclockwise from `e_u`.
    pub e_s: Vector2<f64>,
    /// Columns `e_u`, `e_s`: maps eigen coordinates to plane coordinates.
    pub basis: Matrix2<f64>,
    pub a: Matrix2<f64>,
    pub a_inv: Matrix2<f64>,
}

static FRAME: LazyLock<Eigenframe> = LazyLock::new(|| {
    let sqrt5 = 5f64.sqrt();
    let lambda = (3.0 + sqrt5) / 2.0;
    let slope = (sqrt5 - 1.0) / 2.0;
    let norm = (1.0 + slope * slope).sqrt();
    let e_u = Vector2::new(1.0 / norm, slope / norm);
    let e_s = Vector2::new(-slope / norm, 1.0 / norm);
    Eigenframe {
        lambda,
        log_lambda: lambda.ln(),
        e_u,
        e_s,
        basis: Matrix2::from_columns(&[e_u, e_s]),
        a: Matrix2::new(2.0, 1.0, 1.0, 1.0),
        a_inv: Matrix2::new(1.0, -1.0, -1.0, 2.0),
    }
});

/// The process-wide eigenframe.
#[inline]
pub fn frame() -> &'static Eigenframe {
    &FRAME
}

impl Eigenframe {
    /// Plane vector to eigen coordinates.
    #[inline]
    pub fn to_eigen_vec(&self, d: Vector2<f64>) -> EigenVec2 {
        EigenVec2::new(d.dot(&self.e_u), d.dot(&self.e_s))
    }

    /// Eigen coordinates to a plane vector.
    #[inline]
    pub fn from_eigen_vec(&self, s: EigenVec2) -> Vector2<f64> {
        self.e_u * s.s1 + self.e_s * s.s2
    }

    /// Express an eigen-coordinate matrix in plane coordinates.
    #[inline]
    pub fn matrix_to_plane(&self, m: &Matrix2<f64>) -> Matrix2<f64> {
        self.basis * m * self.basis.transpose()
    }

    /// Express a plane matrix in eigen coordinates.
    #[inline]
    pub fn matrix_to_eigen(&self, m: &Matrix2<f64>) -> Matrix2<f64> {
        self.basis.transpose() * m * self.basis
    }
}

/// Chart coordinates of `x` in the eigenframe centered at `center`.
pub fn to_eigen(x: &TorusPoint, center: &TorusPoint) -> Result<EigenVec2> {
    let d = x.displacement_from(center);
    let r = d.norm();
    if r > CHART_RADIUS {
        return Err(KatokError::ChartOverflow { distance: r, radius: CHART_RADIUS });
    }
    Ok(frame().to_eigen_vec(d))
}

/// Inverse of [`to_eigen`].
pub fn from_eigen(s: &EigenVec2, center: &TorusPoint) -> Result<TorusPoint> {
    let r = s.norm();
    if r > CHART_RADIUS {
        return Err(KatokError::ChartOverflow { distance: r, radius: CHART_RADIUS });
    }
    Ok(center.offset(frame().from_eigen_vec(*s)))
}

/// Acute angle between two lines through the origin, in `[0, pi/2]`.
#[inline]
pub fn line_angle(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let cross = (a.x * b.y - a.y * b.x).abs();
    let dot = (a.x * b.x + a.y * b.y).abs();
    cross.atan2(dot)
}

/// Order and radius of a Bowen ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BowenSpec {
    pub n: usize,
    pub radius: f64,
}

impl BowenSpec {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(KatokError::Domain("Bowen order n must be at least 1".into()));
        }
        if !(radius > 0.0) {
            return Err(KatokError::Domain("Bowen radius must be positive".into()));
        }
        Ok(BowenSpec { n, radius })
    }

    /// Whether `y` lies in the open Bowen ball around `x`.
    pub fn contains<D: Dynamics + ?Sized>(&self, map: &D, x: &TorusPoint, y: &TorusPoint) -> bool {
        let (mut a, mut b) = (*x, *y);
        for k in 0..self.n {
            if torus_dist(&a, &b) >= self.radius {
                return false;
            }
            if k + 1 < self.n {
                a = map.apply(&a);
                b = map.apply(&b);
            }
        }
        true
    }
}

/// An invertible map of the torus.
pub trait Dynamics: Sync {
    fn apply(&self, x: &TorusPoint) -> TorusPoint;
    fn apply_inv(&self, x: &TorusPoint) -> TorusPoint;

    /// Derivative in plane coordinates.
    fn jacobian(&self, x: &TorusPoint) -> Matrix2<f64>;

    /// Image of `x` together with the pushed tangent vector `v` (plane coordinates).
    fn step_tangent(&self, x: &TorusPoint, v: &Vector2<f64>) -> (TorusPoint, Vector2<f64>) {
        (self.apply(x), self.jacobian(x) * v)
    }
}

/// The hyperbolic toral automorphism `x -> A x mod 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearCat;

impl LinearCat {
    #[inline]
    pub fn map(x: &TorusPoint) -> TorusPoint {
        TorusPoint::new(2.0 * x.u + x.v, x.u + x.v)
    }

    #[inline]
    pub fn map_inv(x: &TorusPoint) -> TorusPoint {
        TorusPoint::new(x.u - x.v, 2.0 * x.v - x.u)
    }
}

impl Dynamics for LinearCat {
    fn apply(&self, x: &TorusPoint) -> TorusPoint {
        Self::map(x)
    }
    fn apply_inv(&self, x: &TorusPoint) -> TorusPoint {
        Self::map_inv(x)
    }
    fn jacobian(&self, _x: &TorusPoint) -> Matrix2<f64> {
        frame().a
    }
}

/// `d_n(x, y) = max_{0 <= k < n} d(f^k x, f^k y)`.
pub fn bowen_dist<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, y: &TorusPoint, n: usize) -> f64 {
    let (mut a, mut b) = (*x, *y);
    let mut worst = 0.0f64;
    for k in 0..n.max(1) {
        worst = worst.max(torus_dist(&a, &b));
        if k + 1 < n {
            a = map.apply(&a);
            b = map.apply(&b);
        }
    }
    worst
}

/// First `n` iterates starting from `x` (including `x`).
pub fn orbit<D: Dynamics + ?Sized>(map: &D, x: &TorusPoint, n: usize) -> Vec<TorusPoint> {
    let mut out = Vec::with_capacity(n);
    let mut p = *x;
    for k in 0..n {
        out.push(p);
        if k + 1 < n {
            p = map.apply(&p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_examples() {
        let o = TorusPoint::ORIGIN;
        assert_eq!(torus_dist(&o, &o), 0.0);
        assert_abs_diff_eq!(torus_dist(&TorusPoint::new(0.9, 0.0), &TorusPoint::new(0.1, 0.0)), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(torus_dist(&o, &TorusPoint::new(0.5, 0.5)), 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn reduction_never_returns_one() {
        let p = TorusPoint::new(-1e-20, -0.0);
        assert!(p.u < 1.0 && p.v < 1.0);
        assert_eq!(p.u, 0.0);
    }

    #[test]
    fn eigenframe_matches_closed_form() {
        let f = frame();
        let slope = (5f64.sqrt() - 1.0) / 2.0;
        assert_abs_diff_eq!(f.e_u.y / f.e_u.x, slope, epsilon = 1e-15);
        assert!(f.e_u.dot(&f.e_s).abs() < 1e-14);
        let au = f.a * f.e_u;
        let as_ = f.a * f.e_s;
        assert_abs_diff_eq!((au - f.e_u * f.lambda).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((as_ - f.e_s / f.lambda).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((f.a * f.a_inv - Matrix2::identity()).norm(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn unstable_direction_is_s1_axis() {
        let f = frame();
        let s = f.to_eigen_vec(f.e_u * 0.1);
        assert_abs_diff_eq!(s.s1, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s.s2, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn chart_center_and_overflow() {
        let c = TorusPoint::new(0.3, 0.7);
        let s = to_eigen(&c, &c).unwrap();
        assert_eq!(s, EigenVec2::ZERO);
        assert!(to_eigen(&TorusPoint::new(0.7, 0.2), &c).is_err());
    }

    #[test]
    fn bowen_linear_oracle() {
        let f = frame();
        let h = 1e-3;
        let x = TorusPoint::ORIGIN;
        let y = TorusPoint::from_plane(f.e_u * h);
        assert_abs_diff_eq!(bowen_dist(&LinearCat, &x, &y, 1), h, epsilon = 1e-15);
        assert_abs_diff_eq!(bowen_dist(&LinearCat, &x, &y, 2), f.lambda * h, epsilon = 1e-13);
    }
}
