//! The slow-down profile `psi` and the radial integral `F(u) = int_0^u dv / psi(v)`.
//!
//! On `[0, r0/2]` the profile is `(u/r0)^alpha`. On the blend `[r0/2, r0]` its
//! derivative is `d0 * D(x)` with `x = (u - r0/2) / (r0/2)`, `d0` the derivative of
//! the power law at `r0/2`, and `D(x) = 1 - S(x^k)` for the `exp(-1/x)` smooth step
//! `S`. The exponent `k` is chosen so that the profile reaches exactly 1 at `r0`.
//! A non-increasing derivative makes the profile concave on the blend, which keeps
//! `psi'/psi <= 2 alpha / u` there.

use crate::error::{KatokError, Result};

const BLEND_NODES: usize = 4096;
const GAUSS_POINTS: usize = 10;

/// The `exp(-1/y)` based smooth step: 0 for `y <= 0`, 1 for `y >= 1`, `C^inf` in between.
#[inline]
pub fn smooth_step(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / y).exp();
        let b = (-1.0 / (1.0 - y)).exp();
        a / (a + b)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (m, h) = ((a + b) / 2.0, (b - a) / 2.0);
    gl.0.iter().zip(&gl.1).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

/// Uniform-node cubic Hermite table of an integral whose integrand is known exactly.
#[derive(Debug, Clone)]
struct HermiteTable {
    lo: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = ((x - self.lo) / self.h).max(0.0);
        let last = self.values.len() - 2;
        let i = (t as usize).min(last);
        let s = t - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
    }
}

fn cumulative<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, nodes: usize, gl: &(Vec<f64>, Vec<f64>)) -> HermiteTable {
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut values = Vec::with_capacity(nodes);
    let mut acc = 0.0;
    values.push(0.0);
    for i in 1..nodes {
        acc += integrate(f, lo + (i - 1) as f64 * h, lo + i as f64 * h, gl);
        values.push(acc);
    }
    let slopes = (0..nodes).map(|i| f(lo + i as f64 * h)).collect();
    HermiteTable { lo, h, values, slopes }
}

/// The slow-down profile together with its radial integral.
#[derive(Debug, Clone)]
pub struct SlowProfile {
    pub alpha: f64,
    pub r0: f64,
    /// Exponent `k` in the blend shape `1 - S(x^k)`.
    pub blend_exponent: f64,
    /// `psi(r0/2) = 2^-alpha`.
    psi_lo: f64,
    /// Profile derivative at `r0/2` from the blend side, after exact normalization.
    slope_scale: f64,
    /// `int_0^x D` on the blend, normalized so that the value at `x = 1` is one.
    blend_integral: HermiteTable,
    /// `int_{r0/2}^u dv / psi(v)` for `u` in the blend.
    inverse_integral: HermiteTable,
    /// `F(r0/2)`, in closed form.
    f_lo: f64,
    /// `F(r0)`.
    f_r0: f64,
}

#[inline]
fn blend_shape(x: f64, k: f64) -> f64 {
    1.0 - smooth_step(x.powf(k))
}

impl SlowProfile {
    /// Build the profile, refining the tables until `F(r0)` is stable to `quad_tol`.
    pub fn new(alpha: f64, r0: f64, quad_tol: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(KatokError::InvalidParams(format!(
                "the density 1/psi is integrable only for alpha in (0, 1), got {alpha}"
            )));
        }
        if !(r0 > 0.0 && r0 <= 1.0) {
            return Err(KatokError::InvalidParams(format!("r0 must lie in (0, 1], got {r0}")));
        }
        let gl = gauss_legendre(GAUSS_POINTS);
        let target = ((2f64).powf(alpha) - 1.0) / alpha;
        let fine = |k: f64| {
            let f = |x: f64| blend_shape(x, k);
            (0..256).map(|i| integrate(&f, i as f64 / 256.0, (i + 1) as f64 / 256.0, &gl)).sum::<f64>()
        };
        // The integral of the blend shape rises from 1/2 (k = 1) to 1 (k -> inf).
        let (mut lo, mut hi) = (1.0, 2.0);
        while fine(hi) < target {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(KatokError::InvalidParams("blend exponent search diverged".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fine(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * hi {
                break;
            }
        }
        let k = 0.5 * (lo + hi);

        let mut nodes = BLEND_NODES;
        let mut prev: Option<SlowProfile> = None;
        loop {
            let prof = Self::tabulate(alpha, r0, k, nodes, &gl);
            if let Some(p) = &prev {
                if (p.f_r0 - prof.f_r0).abs() <= quad_tol * prof.f_r0 {
                    return Ok(prof);
                }
            }
            if nodes > 1 << 20 {
                return Ok(prof);
            }
            prev = Some(prof);
            nodes *= 2;
        }
    }

    fn tabulate(alpha: f64, r0: f64, k: f64, nodes: usize, gl: &(Vec<f64>, Vec<f64>)) -> Self {
        let shape = |x: f64| blend_shape(x, k);
        let blend_integral = cumulative(&shape, 0.0, 1.0, nodes, gl);
        let total = *blend_integral.values.last().unwrap();
        let blend_integral = HermiteTable {
            values: blend_integral.values.iter().map(|v| v / total).collect(),
            slopes: blend_integral.slopes.iter().map(|v| v / total).collect(),
            ..blend_integral
        };
        let psi_lo = (0.5f64).powf(alpha);
        let half = r0 / 2.0;
        let slope_scale = (1.0 - psi_lo) / (total * half);
        let f_lo = r0.powf(alpha) * half.powf(1.0 - alpha) / (1.0 - alpha);
        let mut prof = SlowProfile {
            alpha,
            r0,
            blend_exponent: k,
            psi_lo,
            slope_scale,
            blend_integral,
            inverse_integral: HermiteTable { lo: 0.0, h: 1.0, values: vec![0.0, 0.0], slopes: vec![0.0, 0.0] },
            f_lo,
            f_r0: 0.0,
        };
        let recip = |u: f64| 1.0 / prof.psi_blend(u);
        let inverse_integral = cumulative(&recip, half, r0, nodes, gl);
        let f_r0 = f_lo + inverse_integral.values.last().unwrap();
        prof.inverse_integral = inverse_integral;
        prof.f_r0 = f_r0;
        prof
    }

    #[inline]
    fn psi_blend(&self, u: f64) -> f64 {
        let x = (u - self.r0 / 2.0) / (self.r0 / 2.0);
        self.psi_lo + (1.0 - self.psi_lo) * self.blend_integral.eval(x)
    }

    /// The profile for any `u >= 0` (no domain check).
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        if u >= self.r0 {
            1.0
        } else if u <= self.r0 / 2.0 {
            if u <= 0.0 {
                0.0
            } else {
                (u / self.r0).powf(self.alpha)
            }
        } else {
            self.psi_blend(u)
        }
    }

    /// Profile and derivative together.
    #[inline]
    pub fn value_and_slope(&self, u: f64) -> (f64, f64) {
        if u >= self.r0 {
            (1.0, 0.0)
        } else if u <= self.r0 / 2.0 {
            if u <= 0.0 {
                (0.0, 0.0)
            } else {
                let p = (u / self.r0).powf(self.alpha);
                (p, self.alpha * p / u)
            }
        } else {
            let x = (u - self.r0 / 2.0) / (self.r0 / 2.0);
            (self.psi_blend(u), self.slope_scale * blend_shape(x, self.blend_exponent))
        }
    }

    /// `psi(u)` with the domain `[0, 1]` enforced.
    pub fn psi(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(KatokError::Domain(format!("psi is defined on [0, 1], got {u}")));
        }
        Ok(self.value(u))
    }

    /// `F(u) = int_0^u dv / psi(v)`.
    #[inline]
    pub fn radial_integral(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if u <= self.r0 / 2.0 {
            self.r0.powf(self.alpha) * u.powf(1.0 - self.alpha) / (1.0 - self.alpha)
        } else if u < self.r0 {
            self.f_lo + self.inverse_integral.eval(u)
        } else {
            self.f_r0 + (u - self.r0)
        }
    }

    /// Solve `F(u) = target` for `u` in `[0, r0]`.
    pub fn radial_integral_inverse(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        if target <= self.f_lo {
            return ((1.0 - self.alpha) * target / self.r0.powf(self.alpha)).powf(1.0 / (1.0 - self.alpha));
        }
        if target >= self.f_r0 {
            return self.r0 + (target - self.f_r0);
        }
        // F is increasing with F' = 1/psi in [1, 2^alpha] on the blend: safeguarded Newton.
        let (mut lo, mut hi) = (self.r0 / 2.0, self.r0);
        let mut u = lo + (target - self.f_lo) * self.psi_lo;
        for _ in 0..100 {
            let g = self.radial_integral(u) - target;
            if g > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let mut next = u - g * self.value(u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-17 * self.r0 || hi - lo <= 4.0 * f64::EPSILON * self.r0 {
                return next;
            }
            u = next;
        }
        u
    }

    /// `F(r0)`.
    pub fn integral_to_r0(&self) -> f64 {
        self.f_r0
    }

    /// Boundary-matching constant `c0 = F(r0) / r0`, giving `R(sqrt r0) = sqrt r0`.
    pub fn c0(&self) -> f64 {
        self.f_r0 / self.r0
    }

    /// `kappa_0 = int kappa dm = 1 + pi * int_0^{r0} (1/psi - 1) du`.
    pub fn kappa0(&self) -> f64 {
        1.0 + std::f64::consts::PI * (self.f_r0 - self.r0)
    }

    /// Density `1/psi(u)` on the slowed disc, 1 elsewhere.
    #[inline]
    pub fn kappa_at(&self, u: f64) -> f64 {
        if u >= self.r0 {
            1.0
        } else {
            1.0 / self.value(u)
        }
    }

    /// Radial profile `R(r)` with `R(r)^2 = F(r^2)/c0` on the slowed disc.
    #[inline]
    pub fn radial_map(&self, r: f64) -> f64 {
        let u = r * r;
        if u >= self.r0 {
            r
        } else {
            (self.radial_integral(u) / self.c0()).sqrt()
        }
    }

    /// Inverse of [`Self::radial_map`].
    #[inline]
    pub fn radial_map_inverse(&self, big_r: f64) -> f64 {
        let w = big_r * big_r;
        if w >= self.r0 {
            big_r
        } else {
            self.radial_integral_inverse(w * self.c0()).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile() -> SlowProfile {
        SlowProfile::new(0.1, 1e-4, 1e-12).unwrap()
    }

    #[test]
    fn endpoint_values() {
        let p = profile();
        assert_eq!(p.psi(0.0).unwrap(), 0.0);
        assert_eq!(p.psi(p.r0).unwrap(), 1.0);
        assert_relative_eq!(p.psi(p.r0 / 2.0).unwrap(), 2f64.powf(-0.1), max_relative = 1e-15);
        assert!(p.psi(1.5).is_err());
        assert!(p.psi(-1e-3).is_err());
        // Continuity at the outer edge of the blend.
        assert!((p.value(p.r0 * (1.0 - 1e-9)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blend_slope_matches_power_law() {
        let p = profile();
        let u = p.r0 / 2.0;
        let left = p.value_and_slope(u).1;
        let right = p.value_and_slope(u * (1.0 + 1e-12)).1;
        assert_relative_eq!(left, right, max_relative = 1e-9);
        assert!(p.value_and_slope(p.r0 * (1.0 - 1e-6)).1.abs() < 1e-6 * left);
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let gl = gauss_legendre(10);
        let v = integrate(&|x: f64| x.powi(18) + 3.0 * x.powi(7), 0.0, 1.0, &gl);
        assert_relative_eq!(v, 1.0 / 19.0 + 3.0 / 8.0, max_relative = 1e-14);
    }

    #[test]
    fn radial_integral_closed_form() {
        let p = profile();
        for &u in &[1e-12f64, 1e-8, 3e-6, 4.9e-5] {
            let exact = p.r0.powf(0.1) * u.powf(0.9) / 0.9;
            assert_relative_eq!(p.radial_integral(u), exact, max_relative = 1e-14);
        }
    }

    #[test]
    fn radial_integral_matches_quadrature() {
        // Independent composite Simpson on the blend with the profile sampled directly.
        let p = profile();
        let (a, b) = (p.r0 / 2.0, p.r0);
        let m = 200_000;
        let h = (b - a) / m as f64;
        let mut s = 1.0 / p.value(a) + 1.0 / p.value(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w / p.value(a + i as f64 * h);
        }
        let simpson = s * h / 3.0;
        assert_relative_eq!(p.radial_integral(b) - p.radial_integral(a), simpson, max_relative = 1e-10);
    }

    #[test]
    fn inverse_round_trip() {
        let p = profile();
        for i in 1..500 {
            let u = p.r0 * i as f64 / 500.0;
            let back = p.radial_integral_inverse(p.radial_integral(u));
            assert!((back - u).abs() <= 1e-13 * p.r0, "u = {u}, back = {back}");
        }
    }
}
