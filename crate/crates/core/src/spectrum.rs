//! Legendre transform of the pressure curve, the entropy and dimension spectra of
//! Lyapunov level sets, and empirical histograms of finite-time exponents.

use rand::Rng;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::geometry::{frame, EigenVec2, TorusPoint};
use crate::katok::{KatokMap, OrbitCursor};
use crate::parallel::{par_map, trial_rng};
use crate::pressure::PressureCurve;
use crate::stats::{linear_fit, mean, std_dev, LinearFit};
use crate::tangent::{geo_sum_along, require_converged, unstable_direction, DEFAULT_BURN_IN};

/// Slack allowed when checking `alpha` against the sampled slope range.
const SLOPE_SLACK: f64 = 1e-12;

/// Limiting slopes used to extend a sampled curve beyond its grid.
///
/// The right slope is clipped at zero: a non-increasing curve that is bounded below
/// by zero has a flat right tail, and sampling noise must not hide `E(0)`.
pub fn slope_range(curve: &PressureCurve) -> Result<(f64, f64)> {
    let (t, p) = (&curve.t_grid, &curve.p);
    if t.len() < 2 || t.len() != p.len() {
        return Err(KatokError::Domain("curve needs at least two sampled points".into()));
    }
    let k = t.len() - 1;
    let left = (p[1] - p[0]) / (t[1] - t[0]);
    let right = (p[k] - p[k - 1]) / (t[k] - t[k - 1]);
    Ok((left, right.max(0.0)))
}

/// `E(alpha) = inf_t P(t) - t alpha` for the piecewise-linear curve extended by its limiting slopes.
///
/// Inside the slope range the infimum of the extension is attained at a grid point.
pub fn legendre(curve: &PressureCurve, alpha: f64) -> Result<f64> {
    let (lo, hi) = slope_range(curve)?;
    if alpha < lo - SLOPE_SLACK || alpha > hi + SLOPE_SLACK {
        return Err(KatokError::OutOfRange(format!("alpha {alpha} outside the sampled slope range [{lo}, {hi}]")));
    }
    Ok(curve.t_grid.iter().zip(&curve.p).map(|(&t, &p)| p - t * alpha).fold(f64::INFINITY, f64::min))
}

/// Estimates `(alpha1, alpha2)` of the phase transition.
///
/// `alpha2` is the left difference quotient at `t = 1`. `alpha1` is the slope between the
/// two leftmost grid points, an upper bound for the limit as `t -> -inf`.
pub fn alpha_bounds(curve: &PressureCurve) -> Result<(f64, f64)> {
    let (t, p) = (&curve.t_grid, &curve.p);
    if t.len() < 3 || t[0] > -5.0 {
        return Err(KatokError::Domain("curve must be sampled from t <= -5".into()));
    }
    let one = t
        .iter()
        .position(|&s| (s - 1.0).abs() < 1e-9)
        .filter(|&i| i > 0)
        .ok_or_else(|| KatokError::Domain("curve must contain t = 1 with a point to its left".into()))?;
    let alpha2 = (p[one] - p[one - 1]) / (t[one] - t[one - 1]);
    let alpha1 = (p[1] - p[0]) / (t[1] - t[0]);
    Ok((alpha1, alpha2))
}

/// Entropy and dimension spectra on an α-grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub alpha_grid: Vec<f64>,
    /// Legendre values, which are the entropies of the level sets `L(-alpha)`.
    #[serde(rename = "E")]
    pub e: Vec<f64>,
    /// `2 E(alpha) / (-alpha)` clamped to `[0, 2]`; `None` at `alpha = 0`.
    pub dim_lb: Vec<Option<f64>>,
    pub alpha1_hat: f64,
    pub alpha2_hat: f64,
}

impl SpectrumTable {
    /// Largest concavity violation `max(E(a-h) - 2E(a) + E(a+h), 0)`.
    pub fn concavity_defect(&self) -> f64 {
        self.e.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).max(0.0)).fold(0.0, f64::max)
    }

    /// Indices with `alpha` in `[lo, hi]`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        let tol = 1e-12;
        (0..self.alpha_grid.len())
            .filter(|&i| self.alpha_grid[i] >= lo - tol && self.alpha_grid[i] <= hi + tol)
            .collect()
    }

    /// Range on which `E(alpha) = -alpha` is expected: `[alpha2 + 0.01, -0.01]`.
    pub fn plateau_range(&self) -> (f64, f64) {
        (self.alpha2_hat + 0.01, -0.01)
    }

    /// Least squares line of `E` against `alpha` over the plateau range.
    pub fn plateau_fit(&self) -> Option<LinearFit> {
        let (lo, hi) = self.plateau_range();
        let idx = self.indices_in(lo, hi);
        let xs: Vec<f64> = idx.iter().map(|&i| self.alpha_grid[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| self.e[i]).collect();
        linear_fit(&xs, &ys).ok()
    }
}

/// Uniform α-grid on `(alpha1, 0]`: steps of `step` down from zero.
pub fn alpha_grid(alpha1: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(alpha1 < 0.0) {
        return Err(KatokError::Domain("alpha grid needs a negative alpha1 and a positive step".into()));
    }
    let mut grid: Vec<f64> = (0..).map(|k| -(k as f64) * step).take_while(|&a| a > alpha1 + SLOPE_SLACK).collect();
    grid.reverse();
    Ok(grid)
}

/// Fills the Legendre column on `alpha_grid` and records the `alpha` estimates.
pub fn entropy_spectrum(curve: &PressureCurve, alpha_grid: &[f64]) -> Result<SpectrumTable> {
    let (alpha1_hat, alpha2_hat) = alpha_bounds(curve)?;
    let e = alpha_grid.iter().map(|&a| legendre(curve, a)).collect::<Result<Vec<_>>>()?;
    Ok(SpectrumTable {
        alpha_grid: alpha_grid.to_vec(),
        e,
        dim_lb: vec![None; alpha_grid.len()],
        alpha1_hat,
        alpha2_hat,
    })
}

/// `2 E(alpha) / (-alpha)` clamped to `[0, 2]`.
pub fn dimension_value(e: f64, alpha: f64) -> Option<f64> {
    (alpha < 0.0).then(|| (2.0 * e / -alpha).clamp(0.0, 2.0))
}

/// Fills the dimension column; entries with `alpha >= 0` stay undefined.
pub fn dimension_bound(mut table: SpectrumTable) -> SpectrumTable {
    table.dim_lb = table.alpha_grid.iter().zip(&table.e).map(|(&a, &e)| dimension_value(e, a)).collect();
    table
}

/// The spectrum of a curve on a grid of step `step` below zero.
pub fn spectrum(curve: &PressureCurve, step: f64) -> Result<SpectrumTable> {
    let (alpha1, _) = alpha_bounds(curve)?;
    let grid = alpha_grid(alpha1, step)?;
    Ok(dimension_bound(entropy_spectrum(curve, &grid)?))
}

/// Inverse transform `sup_i E(alpha_i) + t alpha_i`, which recovers a convex `P(t)`.
pub fn conjugate(alphas: &[f64], e: &[f64], t: f64) -> f64 {
    alphas.iter().zip(e).map(|(&a, &v)| v + t * a).fold(f64::NEG_INFINITY, f64::max)
}

/// How orbits are seeded for a Lyapunov histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Uniform points of the torus.
    Lebesgue,
    /// Entry points of the switching disc whose passage through the slow zone lasts
    /// between 2 and 20 orbit lengths.
    LingerBiased,
}

impl Sampler {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lebesgue" => Ok(Sampler::Lebesgue),
            "linger-biased" => Ok(Sampler::LingerBiased),
            _ => Err(KatokError::Config(format!("unknown sampler '{s}' (expected lebesgue or linger-biased)"))),
        }
    }
}

/// Finite-time exponents and their histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovHistogram {
    pub n: usize,
    pub sampler: Sampler,
    pub exponents: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

/// `-(1/n) S_n phi_geo` along the orbit of a cursor.
pub fn finite_time_exponent(g: &KatokMap, start: OrbitCursor, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(KatokError::Domain("finite-time exponent needs n >= 1".into()));
    }
    let e = require_converged(unstable_direction(g, &start.point, DEFAULT_BURN_IN))?.direction();
    let (sum, _, _) = geo_sum_along(g, start, e, n)?;
    Ok(-sum / n as f64)
}

/// Seed cursor for sample `i`.
fn seed_point(g: &KatokMap, sampler: Sampler, n: usize, seed: u64, i: usize) -> OrbitCursor {
    let mut rng = trial_rng(seed, i as u64);
    match sampler {
        Sampler::Lebesgue => OrbitCursor::at(TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>())),
        Sampler::LingerBiased => {
            // Near the hyperbola's vertex the speed is c (u / r0)^alpha, so the passage takes
            // about (r0 / 2 rho)^alpha / (alpha c) steps.
            let (r0, r1, a) = (g.params.r0, g.params.r1, g.params.alpha);
            let stretch = (2.0f64.ln() + rng.gen::<f64>() * 10.0f64.ln()).exp();
            let rho = 0.5 * r0 * (a * frame().log_lambda * stretch * n as f64).powf(-1.0 / a);
            let disc = (r1.powi(4) - 4.0 * rho * rho).sqrt();
            let s2 = ((r1 * r1 + disc) / 2.0).sqrt();
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            OrbitCursor::at_chart(EigenVec2::new(sign * rho / s2, s2))
        }
    }
}

/// Histogram of `samples` finite-time exponents over `n` steps, binned on `[0, hi]`.
///
/// `hi` defaults to `2 log lambda`; values outside the range land in the end bins.
pub fn lyapunov_histogram(
    g: &KatokMap,
    n: usize,
    samples: usize,
    sampler: Sampler,
    bins: usize,
    seed: u64,
) -> Result<LyapunovHistogram> {
    if samples == 0 || bins == 0 {
        return Err(KatokError::Domain("histogram needs samples and bins".into()));
    }
    let exponents = par_map(samples, |i| finite_time_exponent(g, seed_point(g, sampler, n, seed, i), n))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let hi = 2.0 * frame().log_lambda;
    let width = hi / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &exponents {
        let b = ((x / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(LyapunovHistogram {
        n,
        sampler,
        bin_centers: (0..bins).map(|b| (b as f64 + 0.5) * width).collect(),
        counts,
        mean: mean(&exponents),
        std: std_dev(&exponents),
        exponents,
    })
}
