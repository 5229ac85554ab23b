//! The homeomorphism `G`, the density `kappa`, the radial change `phi`, and `G~ = phi G phi^-1`.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;

use super::flow::SlowFlow;
use super::profile::SlowProfile;
use crate::error::{KatokError, Result};
use crate::geometry::{frame, Dynamics, EigenVec2, LinearCat, TorusPoint};
use crate::params::MapParams;

/// The slowed automorphism `G` with everything needed to build `G~`.
#[derive(Debug, Clone)]
pub struct KatokMap {
    pub params: MapParams,
    pub profile: SlowProfile,
    r1_sq: f64,
}

/// Result of an entry into the switching disc along a hyperbola `s1 s2 = rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LingerTime {
    pub rho: f64,
    /// Number of time-one steps until the orbit leaves the disc.
    pub measured: usize,
    /// The estimate `r1^2 / (rho lambda^psi(2 rho))`.
    pub bound: f64,
}

/// Panic payload used when an infallible [`Dynamics`] call hits an integrator failure.
#[derive(Debug, Clone)]
pub struct IntegratorPanic(pub KatokError);

fn integrator_panic(e: KatokError) -> ! {
    std::panic::panic_any(IntegratorPanic(e))
}

impl KatokMap {
    pub fn new(params: MapParams) -> Result<Self> {
        let profile = SlowProfile::new(params.alpha, params.r0, params.quad_tol)?;
        Ok(KatokMap { r1_sq: params.r1 * params.r1, params, profile })
    }

    #[inline]
    pub fn slow_flow(&self) -> SlowFlow<'_> {
        SlowFlow { profile: &self.profile, rate: self.params.lambda.ln(), step: self.params.ode_step }
    }

    /// Whether the closed switching disc contains the plane point `d`.
    #[inline]
    pub fn in_switch_disc(&self, d: &Vector2<f64>) -> bool {
        d.norm_squared() <= self.r1_sq
    }

    /// Profile `psi(u)` with the `[0, 1]` domain check.
    pub fn psi(&self, u: f64) -> Result<f64> {
        self.profile.psi(u)
    }

    /// Time-one map of the slowed flow in the eigen chart at the origin.
    pub fn flow_time_one(&self, s: &EigenVec2) -> Result<EigenVec2> {
        self.slow_flow().flow(s, 1.0)
    }

    /// `G(x)`.
    pub fn try_apply(&self, x: &TorusPoint) -> Result<TorusPoint> {
        let d = x.lift();
        if !self.in_switch_disc(&d) {
            return Ok(LinearCat::map(x));
        }
        let f = frame();
        let s = self.slow_flow().flow(&f.to_eigen_vec(d), 1.0)?;
        Ok(TorusPoint::from_plane(f.from_eigen_vec(s)))
    }

    /// `G^-1(y)`.
    pub fn try_apply_inv(&self, y: &TorusPoint) -> Result<TorusPoint> {
        let z = LinearCat::map_inv(y);
        let dz = z.lift();
        if !self.in_switch_disc(&dz) {
            return Ok(z);
        }
        let f = frame();
        let sz = f.to_eigen_vec(dz);
        let sy = EigenVec2::new(sz.s1 * f.lambda, sz.s2 / f.lambda);
        let sx = self.slow_flow().flow(&sy, -1.0)?;
        Ok(TorusPoint::from_plane(f.from_eigen_vec(sx)))
    }

    /// `dG(x)` in plane coordinates.
    pub fn try_jacobian(&self, x: &TorusPoint) -> Result<Matrix2<f64>> {
        let d = x.lift();
        if !self.in_switch_disc(&d) {
            return Ok(frame().a);
        }
        let f = frame();
        let (_, m) = self.slow_flow().flow_with_jacobian(&f.to_eigen_vec(d), 1.0)?;
        Ok(f.matrix_to_plane(&m))
    }

    /// `(G(x), dG(x))` in one integration.
    pub fn try_apply_with_jacobian(&self, x: &TorusPoint) -> Result<(TorusPoint, Matrix2<f64>)> {
        let d = x.lift();
        if !self.in_switch_disc(&d) {
            return Ok((LinearCat::map(x), frame().a));
        }
        let f = frame();
        let (s, m) = self.slow_flow().flow_with_jacobian(&f.to_eigen_vec(d), 1.0)?;
        Ok((TorusPoint::from_plane(f.from_eigen_vec(s)), f.matrix_to_plane(&m)))
    }

    /// `(G(x), dG(x) v)` for a plane vector `v`.
    pub fn try_step_tangent(&self, x: &TorusPoint, v: &Vector2<f64>) -> Result<(TorusPoint, Vector2<f64>)> {
        let d = x.lift();
        if !self.in_switch_disc(&d) {
            return Ok((LinearCat::map(x), frame().a * v));
        }
        let f = frame();
        let xi = f.basis.transpose() * v;
        let (s, w) = self.slow_flow().flow_with_tangent(&f.to_eigen_vec(d), &xi, 1.0)?;
        Ok((TorusPoint::from_plane(f.from_eigen_vec(s)), f.basis * w))
    }

    /// Density of the invariant measure before normalization.
    #[inline]
    pub fn kappa(&self, x: &TorusPoint) -> f64 {
        self.profile.kappa_at(x.lift().norm_squared())
    }

    /// `kappa_0 = int kappa dm`.
    pub fn kappa_normalizer(&self) -> f64 {
        self.profile.kappa0()
    }

    /// The radial coordinate change that turns `nu` into area on the slowed disc.
    pub fn phi(&self, x: &TorusPoint) -> TorusPoint {
        let d = x.lift();
        let u = d.norm_squared();
        if u >= self.params.r0 || u == 0.0 {
            return *x;
        }
        let r = u.sqrt();
        TorusPoint::from_plane(d * (self.profile.radial_map(r) / r))
    }

    pub fn phi_inv(&self, y: &TorusPoint) -> TorusPoint {
        let d = y.lift();
        let u = d.norm_squared();
        if u >= self.params.r0 || u == 0.0 {
            return *y;
        }
        let r = u.sqrt();
        TorusPoint::from_plane(d * (self.profile.radial_map_inverse(r) / r))
    }

    /// `D phi` at `x`, plane coordinates. Singular at the origin, where it is not defined.
    pub fn phi_jacobian(&self, x: &TorusPoint) -> Matrix2<f64> {
        let d = x.lift();
        let u = d.norm_squared();
        if u >= self.params.r0 || u == 0.0 {
            return Matrix2::identity();
        }
        let r = u.sqrt();
        let big_r = self.profile.radial_map(r);
        let dr = r / (self.profile.c0() * self.profile.value(u) * big_r);
        let n = d / r;
        Matrix2::identity() * (big_r / r) + (n * n.transpose()) * (dr - big_r / r)
    }

    /// `G~(x) = phi(G(phi^-1(x)))`.
    pub fn try_apply_tilde(&self, x: &TorusPoint) -> Result<TorusPoint> {
        Ok(self.phi(&self.try_apply(&self.phi_inv(x))?))
    }

    pub fn try_apply_tilde_inv(&self, x: &TorusPoint) -> Result<TorusPoint> {
        Ok(self.phi(&self.try_apply_inv(&self.phi_inv(x))?))
    }

    /// `dG~(x) = D phi(G z) dG(z) D phi(z)^-1` with `z = phi^-1(x)`.
    pub fn try_jacobian_tilde(&self, x: &TorusPoint) -> Result<Matrix2<f64>> {
        let z = self.phi_inv(x);
        let (gz, m) = self.try_apply_with_jacobian(&z)?;
        let inner = self
            .phi_jacobian(&z)
            .try_inverse()
            .ok_or_else(|| KatokError::Domain("D phi is singular at the origin".into()))?;
        Ok(self.phi_jacobian(&gz) * m * inner)
    }

    /// Constant relating the two possible normalizers of `phi`.
    pub fn normalizer_ratio(&self) -> f64 {
        self.kappa_normalizer() / self.profile.c0()
    }

    /// Passage through the switching disc from the entry point on the hyperbola `s1 s2 = rho`.
    pub fn linger_time(&self, rho: f64) -> Result<LingerTime> {
        let r1 = self.params.r1;
        if !(rho > 0.0 && rho < r1 * r1 / 4.0) {
            return Err(KatokError::Domain(format!("rho must lie in (0, r1^2/4), got {rho}")));
        }
        let disc = (r1.powi(4) - 4.0 * rho * rho).sqrt();
        let s2 = ((r1 * r1 + disc) / 2.0).sqrt();
        let entry = EigenVec2::new(rho / s2, s2);
        let bound = r1 * r1 / (rho * self.params.lambda.powf(self.profile.value(2.0 * rho)));
        let cap = (10.0 * bound).ceil() as usize;
        let measured = self.passage_steps(entry, cap)?;
        Ok(LingerTime { rho, measured, bound })
    }

    /// Largest relative change of `s1 s2` under the time-one flow over `samples` points
    /// drawn uniformly from the switching disc.
    pub fn product_drift(&self, samples: usize, seed: u64) -> Result<f64> {
        let r1 = self.params.r1;
        let flow = self.slow_flow();
        let rows: Vec<Result<f64>> = crate::parallel::par_map(samples, |i| {
            let mut rng = crate::parallel::trial_rng(seed, i as u64);
            let r = r1 * rng.gen::<f64>().sqrt();
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            let s = EigenVec2::new(r * a.cos(), r * a.sin());
            let img = flow.flow(&s, 1.0)?;
            let p0 = s.s1 * s.s2;
            Ok(if p0 == 0.0 { (img.s1 * img.s2).abs() } else { ((img.s1 * img.s2) - p0).abs() / p0.abs() })
        });
        rows.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
    }

    /// Number of time-one steps for the chart point `s` to leave the switching disc.
    pub fn passage_steps(&self, entry: EigenVec2, cap: usize) -> Result<usize> {
        let flow = self.slow_flow();
        let rho = entry.s1 * entry.s2;
        if entry.s1 == 0.0 {
            // The stable axis is invariant: the orbit converges to the origin.
            return Err(KatokError::NonExit { rho, steps: 0 });
        }
        let mut s = entry;
        for k in 1..=cap {
            s = flow.flow(&s, 1.0)?;
            if s.norm_sq() > self.r1_sq {
                return Ok(k);
            }
        }
        Err(KatokError::NonExit { rho, steps: cap })
    }
}

impl Dynamics for KatokMap {
    fn apply(&self, x: &TorusPoint) -> TorusPoint {
        self.try_apply(x).unwrap_or_else(|e| integrator_panic(e))
    }
    fn apply_inv(&self, x: &TorusPoint) -> TorusPoint {
        self.try_apply_inv(x).unwrap_or_else(|e| integrator_panic(e))
    }
    fn jacobian(&self, x: &TorusPoint) -> Matrix2<f64> {
        self.try_jacobian(x).unwrap_or_else(|e| integrator_panic(e))
    }
    fn step_tangent(&self, x: &TorusPoint, v: &Vector2<f64>) -> (TorusPoint, Vector2<f64>) {
        self.try_step_tangent(x, v).unwrap_or_else(|e| integrator_panic(e))
    }
}

/// `G~` viewed as a map of the torus.
#[derive(Debug, Clone, Copy)]
pub struct KatokTilde<'a>(pub &'a KatokMap);

impl Dynamics for KatokTilde<'_> {
    fn apply(&self, x: &TorusPoint) -> TorusPoint {
        self.0.try_apply_tilde(x).unwrap_or_else(|e| integrator_panic(e))
    }
    fn apply_inv(&self, x: &TorusPoint) -> TorusPoint {
        self.0.try_apply_tilde_inv(x).unwrap_or_else(|e| integrator_panic(e))
    }
    fn jacobian(&self, x: &TorusPoint) -> Matrix2<f64> {
        self.0.try_jacobian_tilde(x).unwrap_or_else(|e| integrator_panic(e))
    }
}

/// An orbit point that keeps exact chart coordinates while inside the switching disc.
///
/// Torus coordinates near the origin lose resolution on the negative side (values
/// just below 1 round to 1), so lingering orbits are iterated in the chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitCursor {
    pub point: TorusPoint,
    chart: Option<EigenVec2>,
}

impl OrbitCursor {
    pub fn at(x: TorusPoint) -> Self {
        OrbitCursor { point: x, chart: None }
    }

    /// Start from chart coordinates at the origin.
    pub fn at_chart(s: EigenVec2) -> Self {
        let point = TorusPoint::from_plane(frame().from_eigen_vec(s));
        OrbitCursor { point, chart: Some(s) }
    }

    /// Exact chart coordinates, when inside the switching disc.
    pub fn chart(&self) -> Option<EigenVec2> {
        self.chart
    }

    /// Squared distance to the origin.
    pub fn dist_sq(&self) -> f64 {
        match self.chart {
            Some(s) => s.norm_sq(),
            None => self.point.lift().norm_squared(),
        }
    }

    fn chart_coords(&self, g: &KatokMap) -> Option<EigenVec2> {
        match self.chart {
            Some(s) => Some(s),
            None => {
                let d = self.point.lift();
                g.in_switch_disc(&d).then(|| frame().to_eigen_vec(d))
            }
        }
    }

    fn settle(g: &KatokMap, s: EigenVec2) -> Self {
        let point = TorusPoint::from_plane(frame().from_eigen_vec(s));
        let chart = (s.norm_sq() <= g.r1_sq).then_some(s);
        OrbitCursor { point, chart }
    }

    /// Advance by `G`.
    pub fn step(&self, g: &KatokMap) -> Result<Self> {
        match self.chart_coords(g) {
            Some(s) => Ok(Self::settle(g, g.slow_flow().flow(&s, 1.0)?)),
            None => Ok(Self::at(LinearCat::map(&self.point))),
        }
    }

    /// Advance by `G` carrying a plane tangent vector.
    pub fn step_tangent(&self, g: &KatokMap, v: &Vector2<f64>) -> Result<(Self, Vector2<f64>)> {
        let f = frame();
        match self.chart_coords(g) {
            Some(s) => {
                let xi = f.basis.transpose() * v;
                let (s1, w) = g.slow_flow().flow_with_tangent(&s, &xi, 1.0)?;
                Ok((Self::settle(g, s1), f.basis * w))
            }
            None => Ok((Self::at(LinearCat::map(&self.point)), f.a * v)),
        }
    }

    /// Advance by `G` returning the one-step derivative (plane coordinates).
    pub fn step_jacobian(&self, g: &KatokMap) -> Result<(Self, Matrix2<f64>)> {
        let f = frame();
        match self.chart_coords(g) {
            Some(s) => {
                let (s1, m) = g.slow_flow().flow_with_jacobian(&s, 1.0)?;
                Ok((Self::settle(g, s1), f.matrix_to_plane(&m)))
            }
            None => Ok((Self::at(LinearCat::map(&self.point)), f.a)),
        }
    }
}
