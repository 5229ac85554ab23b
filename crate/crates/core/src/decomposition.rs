//! The indicator `chi` of the region far from the origin, the prefix/good/suffix
//! decomposition of orbit segments, and empirical probes of contraction, the Bowen
//! property and expansivity on good segments.

use rand::Rng;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::geometry::{orbit, torus_dist, Dynamics, TorusPoint};
use crate::katok::KatokMap;
use crate::parallel::{par_map, trial_rng};
use crate::params::MapParams;
use crate::stats::{linear_fit, median, t_critical_99};
use crate::tangent::OrbitFrame;

/// Slack factor applied to the contraction bounds.
pub const CONTRACTION_SLACK: f64 = 1.2;

/// A finite orbit segment `(x, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitSegment {
    pub x: TorusPoint,
    pub n: usize,
}

/// Lengths of the prefix, good and suffix pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecompTriple {
    pub p: usize,
    pub g: usize,
    pub s: usize,
}

/// Threshold `r` and the radius of the disc where `chi` vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollectionParams {
    pub r: f64,
    pub chi_radius: f64,
}

impl CollectionParams {
    pub fn new(r: f64, params: &MapParams) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(KatokError::Domain(format!("r must lie in (0, 1], got {r}")));
        }
        Ok(CollectionParams { r, chi_radius: params.chi_radius() })
    }

    /// `1` outside the closed disc of radius `chi_radius` around the origin, else `0`.
    #[inline]
    pub fn chi(&self, x: &TorusPoint) -> u8 {
        u8::from(x.norm_from_origin() > self.chi_radius)
    }

    /// `chi` along the first `n` iterates of `x`.
    pub fn chi_sequence<D: Dynamics + ?Sized>(&self, map: &D, seg: &OrbitSegment) -> Vec<u8> {
        orbit(map, &seg.x, seg.n).iter().map(|p| self.chi(p)).collect()
    }
}

fn prefix_sums(chis: &[u8]) -> Vec<u32> {
    let mut out = Vec::with_capacity(chis.len() + 1);
    let mut acc = 0u32;
    out.push(0);
    for &c in chis {
        acc += u32::from(c);
        out.push(acc);
    }
    out
}

#[inline]
fn below(sum: u32, len: usize, r: f64) -> bool {
    (sum as f64) < len as f64 * r
}

/// Decomposition of a segment given its `chi` values.
///
/// `p` is the largest `i` with `S_i chi(x) < i r`, then `s` the largest `k <= n - p`
/// with `S_k chi(G^{n-k} x) < k r`; either is `0` when nothing qualifies.
pub fn classify_chi(chis: &[u8], r: f64) -> DecompTriple {
    let n = chis.len();
    let sums = prefix_sums(chis);
    let p = (0..=n).rev().find(|&i| below(sums[i], i, r)).unwrap_or(0);
    let s = (0..=n - p).rev().find(|&k| below(sums[n] - sums[n - k], k, r)).unwrap_or(0);
    DecompTriple { p, g: n - p - s, s }
}

/// The decomposition rule applied literally: every candidate prefix and suffix length
/// is tested by summing `chi` from scratch. Quadratic; used to cross-check [`classify_chi`].
pub fn classify_chi_scan(chis: &[u8], r: f64) -> DecompTriple {
    let n = chis.len();
    let sum = |from: usize, len: usize| chis[from..from + len].iter().map(|&c| u32::from(c)).sum::<u32>();
    let p = (0..=n).filter(|&i| below(sum(0, i), i, r)).max().unwrap_or(0);
    let s = (0..=n - p).filter(|&k| below(sum(n - k, k), k, r)).max().unwrap_or(0);
    DecompTriple { p, g: n - p - s, s }
}

/// Decomposition of `seg` under `map`.
pub fn classify<D: Dynamics + ?Sized>(map: &D, seg: &OrbitSegment, params: &CollectionParams) -> DecompTriple {
    classify_chi(&params.chi_sequence(map, seg), params.r)
}

/// `S_i chi(x) >= i r` and `S_i chi(G^{n-i} x) >= i r` for all `0 <= i <= n`.
pub fn is_good_chi(chis: &[u8], r: f64) -> bool {
    let n = chis.len();
    let sums = prefix_sums(chis);
    (0..=n).all(|i| !below(sums[i], i, r) && !below(sums[n] - sums[n - i], i, r))
}

/// `S_n chi(x) < n r`; segments of length zero belong to every collection.
pub fn is_prefix_chi(chis: &[u8], r: f64) -> bool {
    let n = chis.len();
    n == 0 || below(prefix_sums(chis)[n], n, r)
}

pub fn is_good<D: Dynamics + ?Sized>(map: &D, seg: &OrbitSegment, params: &CollectionParams) -> bool {
    is_good_chi(&params.chi_sequence(map, seg), params.r)
}

pub fn is_prefix<D: Dynamics + ?Sized>(map: &D, seg: &OrbitSegment, params: &CollectionParams) -> bool {
    is_prefix_chi(&params.chi_sequence(map, seg), params.r)
}

/// The suffix collection coincides with the prefix collection.
pub fn is_suffix<D: Dynamics + ?Sized>(map: &D, seg: &OrbitSegment, params: &CollectionParams) -> bool {
    is_prefix(map, seg, params)
}

/// Which contraction statement a probe tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContractionVariant {
    /// `d_s(G^i x, G^i y) <= theta^{i r} d_s(x, y)` for `y` on the stable leaf of `x`.
    StableLeaf,
    /// `d(G^k x, G^k y) <= scale gamma (theta^{k r} + theta^{(n-k-1) r})` for `y` in the Bowen ball.
    BowenBall,
}

/// Per-step distances and bounds of a contraction probe.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub variant: ContractionVariant,
    pub good: bool,
    pub distances: Vec<f64>,
    pub bounds: Vec<f64>,
    pub violations: usize,
}

impl ContractionReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// `(lambda (1 - beta))^{-1}`.
pub fn contraction_rate(params: &MapParams) -> f64 {
    1.0 / (params.lambda * (1.0 - params.beta))
}

/// Measure distances between the orbit of `seg.x` and a shadowing pseudo-orbit
/// displaced by `a` along the stable leaf (and by `b` along the unstable leaf at the
/// far end for the Bowen-ball variant), and compare against the exponential bounds.
pub fn contraction_probe(
    g: &KatokMap,
    seg: &OrbitSegment,
    params: &CollectionParams,
    variant: ContractionVariant,
    a: f64,
    b: f64,
    scale: f64,
) -> Result<ContractionReport> {
    let n = seg.n;
    if n == 0 {
        return Err(KatokError::Domain("contraction probe needs n >= 1".into()));
    }
    let good = is_good(g, seg, params);
    let frame = OrbitFrame::new(g, &seg.x, n)?;
    let theta = contraction_rate(&g.params);
    let r = params.r;
    let (distances, bounds): (Vec<f64>, Vec<f64>) = match variant {
        ContractionVariant::StableLeaf => {
            let s = frame.pseudo_orbit(g, a, 0.0)?;
            let d0 = s.stable_dev[0];
            let bounds = (0..n).map(|i| CONTRACTION_SLACK * theta.powf(i as f64 * r) * d0).collect();
            (s.stable_dev, bounds)
        }
        ContractionVariant::BowenBall => {
            let s = frame.pseudo_orbit(g, a, b)?;
            let d = s.points.iter().zip(&frame.points).map(|(y, x)| torus_dist(x, y)).collect();
            let gamma = g.params.gamma;
            let bounds = (0..n)
                .map(|k| {
                    CONTRACTION_SLACK * scale * gamma * (theta.powf(k as f64 * r) + theta.powf((n - k - 1) as f64 * r))
                })
                .collect();
            (d, bounds)
        }
    };
    let violations = distances.iter().zip(&bounds).filter(|(d, b)| **d > **b * (1.0 + 1e-12) + 1e-15).count();
    Ok(ContractionReport { variant, good, distances, bounds, violations })
}

/// A potential evaluated pointwise.
pub type Potential<'a> = &'a (dyn Fn(&TorusPoint) -> f64 + Sync);

/// `d(x, 0)^{1/2}`, the Hölder test potential.
pub fn sqrt_distance_potential(x: &TorusPoint) -> f64 {
    x.norm_from_origin().sqrt()
}

/// Regression of the Birkhoff-sum variation `V(n)` over Bowen balls against `n`.
#[derive(Debug, Clone, Serialize)]
pub struct BowenReport {
    pub n_values: Vec<usize>,
    pub variation: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_t: f64,
    /// Whether the slope differs from zero at the 99% level.
    pub slope_significant: bool,
    pub max: f64,
    pub trials: usize,
}

/// Draw a good segment of length `n` by rejection from uniform starting points.
fn sample_good_segment<R: Rng>(
    g: &KatokMap,
    n: usize,
    params: &CollectionParams,
    rng: &mut R,
    budget: usize,
) -> Result<OrbitSegment> {
    for _ in 0..budget {
        let seg = OrbitSegment { x: TorusPoint::new(rng.gen(), rng.gen()), n };
        if is_good(g, &seg, params) {
            return Ok(seg);
        }
    }
    Err(KatokError::Sampling(format!("no good segment of length {n} in {budget} draws")))
}

/// Largest `|S_n phi(x) - S_n phi(y)|` over sampled `y` in `B_n(x, scale)`, built from
/// leaf offsets `|a|, |b| <= scale / gamma`.
pub fn bowen_ball_variation<R: Rng>(
    g: &KatokMap,
    x: &TorusPoint,
    n: usize,
    potential: Potential<'_>,
    scale: f64,
    per_point: usize,
    rng: &mut R,
) -> Result<f64> {
    let frame = OrbitFrame::new(g, x, n)?;
    let base: f64 = frame.points.iter().map(potential).sum();
    let lim = scale / g.params.gamma;
    let mut worst = 0.0f64;
    for _ in 0..per_point {
        let a = rng.gen_range(-lim..lim);
        let b = rng.gen_range(-lim..lim);
        let s = frame.pseudo_orbit(g, a, b)?;
        if s.bowen_distance >= scale {
            continue;
        }
        let other: f64 = s.points.iter().map(potential).sum();
        worst = worst.max((base - other).abs());
    }
    Ok(worst)
}

/// Samples per starting point in Bowen-ball probes.
pub const BALL_SAMPLES: usize = 4;

/// Empirical Bowen-property check.  With `good_only`, starting points are restricted to
/// good segments; otherwise they are uniform.
#[allow(clippy::too_many_arguments)]
pub fn bowen_property_probe(
    g: &KatokMap,
    potential: Potential<'_>,
    params: &CollectionParams,
    scale: f64,
    trials: usize,
    n_values: &[usize],
    good_only: bool,
    seed: u64,
) -> Result<BowenReport> {
    if n_values.len() < 3 || trials == 0 {
        return Err(KatokError::Domain("Bowen probe needs at least 3 lengths and 1 trial".into()));
    }
    let jobs = n_values.len() * trials;
    let rows: Vec<Result<f64>> = par_map(jobs, |j| {
        let n = n_values[j / trials];
        let mut rng = trial_rng(seed, j as u64);
        let x = if good_only {
            sample_good_segment(g, n, params, &mut rng, 1000)?.x
        } else {
            TorusPoint::new(rng.gen(), rng.gen())
        };
        bowen_ball_variation(g, &x, n, potential, scale, BALL_SAMPLES, &mut rng)
    });
    let mut variation = vec![0.0f64; n_values.len()];
    for (j, r) in rows.into_iter().enumerate() {
        let v = r?;
        variation[j / trials] = variation[j / trials].max(v);
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    let max = variation.iter().cloned().fold(0.0, f64::max);
    let (slope, intercept, slope_t) = if variation.iter().all(|&v| v == variation[0]) {
        (0.0, variation[0], 0.0)
    } else {
        let fit = linear_fit(&xs, &variation)?;
        (fit.slope, fit.intercept, fit.t_stat())
    };
    let slope_significant = slope_t.abs() >= t_critical_99(n_values.len() - 2);
    Ok(BowenReport {
        n_values: n_values.to_vec(),
        variation,
        slope,
        intercept,
        slope_t,
        slope_significant,
        max,
        trials,
    })
}

/// Two-sided separation statistics of nearby pairs.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansivityReport {
    pub scale: f64,
    pub horizon: usize,
    pub pairs: usize,
    pub survivors: usize,
    pub survival_fraction: f64,
    /// Median initial distance of surviving pairs (`0` when none survive).
    pub median_survivor_distance: f64,
}

/// How initial pair distances are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PairDistance {
    /// Every pair at the same distance.
    Fixed(f64),
    /// Log-uniform on `[scale * 1e-12, scale)`.
    LogUniform,
}

/// Whether two orbits stay within `scale` for `|k| <= horizon`.
pub fn stays_close(g: &KatokMap, x: &TorusPoint, y: &TorusPoint, scale: f64, horizon: usize) -> Result<bool> {
    let (mut a, mut b) = (*x, *y);
    for _ in 0..horizon {
        a = g.try_apply(&a)?;
        b = g.try_apply(&b)?;
        if torus_dist(&a, &b) >= scale {
            return Ok(false);
        }
    }
    let (mut a, mut b) = (*x, *y);
    for _ in 0..horizon {
        a = g.try_apply_inv(&a)?;
        b = g.try_apply_inv(&b)?;
        if torus_dist(&a, &b) >= scale {
            return Ok(false);
        }
    }
    Ok(torus_dist(x, y) < scale)
}

/// Sample pairs closer than `scale` and count those whose two-sided orbits never separate.
pub fn expansivity_probe(
    g: &KatokMap,
    scale: f64,
    horizon: usize,
    pairs: usize,
    distance: PairDistance,
    seed: u64,
) -> Result<ExpansivityReport> {
    if !(scale > 0.0) || horizon == 0 {
        return Err(KatokError::Domain("expansivity probe needs positive scale and horizon".into()));
    }
    let rows: Vec<Result<Option<f64>>> = par_map(pairs, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let x = TorusPoint::new(rng.gen(), rng.gen());
        let d = match distance {
            PairDistance::Fixed(d) => d,
            PairDistance::LogUniform => scale * 10f64.powf(-12.0 * rng.gen::<f64>()),
        };
        let ang = rng.gen::<f64>() * std::f64::consts::TAU;
        let y = x.offset(nalgebra::Vector2::new(d * ang.cos(), d * ang.sin()));
        Ok(stays_close(g, &x, &y, scale, horizon)?.then_some(d))
    });
    let mut surv = Vec::new();
    for r in rows {
        if let Some(d) = r? {
            surv.push(d);
        }
    }
    Ok(ExpansivityReport {
        scale,
        horizon,
        pairs,
        survivors: surv.len(),
        survival_fraction: surv.len() as f64 / pairs.max(1) as f64,
        median_survivor_distance: median(&surv).unwrap_or(0.0),
    })
}
