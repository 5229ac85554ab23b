//! Empirical equilibrium-state approximants, Gibbs log-ratios over Bowen balls and
//! large-deviation rate functions.
//!
//! `nu_n` is the normalized weighting `e^{S_n phi}` on a maximizing
//! `(n, 5 epsilon)`-separated set and `mu_n = (1/n) sum_i (G^i)_* nu_n`.  Diagnostics
//! that need orbits of atoms read them from an [`AtomOrbits`] table, which stores each
//! `nu_n` orbit once and addresses the atoms of `mu_n` as windows into it.

use rand::distributions::{Distribution, WeightedIndex};
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::decomposition::Potential;
use crate::error::{KatokError, Result};
use crate::geometry::TorusPoint;
use crate::katok::{KatokMap, OrbitCursor};
use crate::parallel::{par_map, trial_rng};
use crate::pressure::{build_separated_set, partition_sum, torus_dist_f32, OrbitTable, PoolSpec};
use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeasureKind {
    /// Weighted separated set.
    Nu,
    /// Orbit average of a weighted separated set.
    Mu,
}

/// Finite atomic probability measure.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedOrbitMeasure {
    pub atoms: Vec<(TorusPoint, f64)>,
    pub n: usize,
    pub kind: MeasureKind,
    /// Separation scale of the underlying set.
    pub delta: f64,
    /// `log sum_{x in E_n} e^{S_n phi(x)}`, from the same reduction as the weights.
    pub log_partition: f64,
    /// Pool the atoms came from and, for `nu_n`, their pool indices.
    #[serde(skip)]
    pub source: Option<(PoolSpec, Vec<usize>)>,
}

impl WeightedOrbitMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn integrate(&self, f: impl Fn(&TorusPoint) -> f64) -> f64 {
        self.atoms.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// `|int f o G d mu - int f d mu|`.
    pub fn invariance_defect(&self, g: &KatokMap, f: impl Fn(&TorusPoint) -> f64 + Sync) -> Result<f64> {
        let terms: Vec<Result<f64>> = par_map(self.atoms.len(), |i| {
            let (x, w) = self.atoms[i];
            let gx = OrbitCursor::at(x).step(g)?.point;
            Ok(w * (f(&gx) - f(&x)))
        });
        let mut total = 0.0;
        for t in terms {
            total += t?;
        }
        Ok(total.abs())
    }
}

/// Potential defining an equilibrium state.
#[derive(Clone, Copy)]
pub enum GibbsPotential<'a> {
    /// `t phi_geo`.
    Geometric(f64),
    /// Any continuous function of the point.
    Function(Potential<'a>),
}

impl GibbsPotential<'_> {
    fn needs_geo(&self) -> bool {
        matches!(self, GibbsPotential::Geometric(t) if *t != 0.0)
    }

    fn id(&self) -> String {
        match self {
            GibbsPotential::Geometric(t) => format!("geo*{t}"),
            GibbsPotential::Function(_) => "phi".into(),
        }
    }
}

fn potential_table(
    g: &KatokMap,
    pool: PoolSpec,
    len: usize,
    potential: &GibbsPotential<'_>,
    geo: bool,
) -> Result<OrbitTable> {
    match potential {
        GibbsPotential::Function(f) => OrbitTable::build(g, pool, len, geo, &[("phi", *f)]),
        GibbsPotential::Geometric(_) => OrbitTable::build(g, pool, len, geo || potential.needs_geo(), &[]),
    }
}

fn table_potential_sum(table: &OrbitTable, potential: &GibbsPotential<'_>, i: usize, from: usize, to: usize) -> f64 {
    match potential {
        GibbsPotential::Geometric(t) if *t == 0.0 => 0.0,
        GibbsPotential::Geometric(t) => t * (table.geo_sum(i, to).unwrap() - table.geo_sum(i, from).unwrap()),
        GibbsPotential::Function(_) => {
            table.potential_sum("phi", i, to).unwrap() - table.potential_sum("phi", i, from).unwrap()
        }
    }
}

/// `nu_n` on a maximizing `(n, 5 epsilon)`-separated subset of `pool`.
///
/// The set is selected greedily in descending order of `S_n phi`.
pub fn build_nu_n(
    g: &KatokMap,
    pool: PoolSpec,
    n: usize,
    epsilon: f64,
    potential: GibbsPotential<'_>,
) -> Result<WeightedOrbitMeasure> {
    if !(epsilon > 0.0) {
        return Err(KatokError::Domain("epsilon must be positive".into()));
    }
    let delta = 5.0 * epsilon;
    let table = potential_table(g, pool.clone(), n, &potential, false)?;
    let sums: Vec<f64> = (0..table.len()).map(|i| table_potential_sum(&table, &potential, i, 0, n)).collect();
    let set = build_separated_set(&table, n, delta, Some(&sums), None)?;
    let record = partition_sum(&set, &potential.id(), |i| sums[i]);
    let atoms =
        set.indices.iter().map(|&i| (table.point(i as usize), (sums[i as usize] - record.log_sum).exp())).collect();
    let rows = set.indices.iter().map(|&i| i as usize).collect();
    Ok(WeightedOrbitMeasure {
        atoms,
        n,
        kind: MeasureKind::Nu,
        delta,
        log_partition: record.log_sum,
        source: Some((pool, rows)),
    })
}

/// `mu_n = (1/n) sum_{i<n} (G^i)_* nu_n`.
pub fn build_mu_n(g: &KatokMap, nu: &WeightedOrbitMeasure) -> Result<WeightedOrbitMeasure> {
    if nu.kind != MeasureKind::Nu {
        return Err(KatokError::Domain("mu_n is built from nu_n".into()));
    }
    let n = nu.n;
    let rows: Vec<Result<Vec<(TorusPoint, f64)>>> = par_map(nu.atoms.len(), |a| {
        let (x, w) = nu.atoms[a];
        let mut c = OrbitCursor::at(x);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push((c.point, w / n as f64));
            if i + 1 < n {
                c = c.step(g)?;
            }
        }
        Ok(out)
    });
    let mut atoms = Vec::with_capacity(n * nu.atoms.len());
    for r in rows {
        atoms.extend(r?);
    }
    Ok(WeightedOrbitMeasure {
        atoms,
        n,
        kind: MeasureKind::Mu,
        delta: nu.delta,
        log_partition: nu.log_partition,
        source: None,
    })
}

/// Orbits of the atoms of a measure over a fixed horizon.
pub struct AtomOrbits<'a> {
    table: OrbitTable,
    /// `(row, offset, weight)`.
    atoms: Vec<(u32, u32, f64)>,
    horizon: usize,
    potential: GibbsPotential<'a>,
    /// Atoms bucketed by their initial cell, for ball queries.
    cells: FxHashMap<(i32, i32), Vec<u32>>,
    cell_count: i32,
}

impl<'a> AtomOrbits<'a> {
    /// Atoms of `mu_n` built from `nu`, each followed for `horizon` steps.
    ///
    /// Only the `nu` orbits are iterated, for `n + horizon` steps; the atom
    /// `G^i x` reads the window starting at offset `i`.
    pub fn of_mu(
        g: &KatokMap,
        nu: &WeightedOrbitMeasure,
        horizon: usize,
        potential: GibbsPotential<'a>,
        cell: f64,
    ) -> Result<Self> {
        if nu.kind != MeasureKind::Nu {
            return Err(KatokError::Domain("atom orbits of mu_n are built from nu_n".into()));
        }
        let n = nu.n;
        let pool = source_pool(nu);
        let table = potential_table(g, pool, n + horizon, &potential, true)?;
        let mut atoms = Vec::with_capacity(n * nu.atoms.len());
        for (r, (_, w)) in nu.atoms.iter().enumerate() {
            for i in 0..n {
                atoms.push((r as u32, i as u32, w / n as f64));
            }
        }
        Ok(Self::index(table, atoms, horizon, potential, cell))
    }

    /// Atoms of an arbitrary measure, each followed for `horizon` steps.
    pub fn of_measure(
        g: &KatokMap,
        m: &WeightedOrbitMeasure,
        horizon: usize,
        potential: GibbsPotential<'a>,
        cell: f64,
    ) -> Result<Self> {
        let pool = source_pool(m);
        let table = potential_table(g, pool, horizon, &potential, true)?;
        let atoms = m.atoms.iter().enumerate().map(|(r, (_, w))| (r as u32, 0, *w)).collect();
        Ok(Self::index(table, atoms, horizon, potential, cell))
    }

    fn index(
        table: OrbitTable,
        atoms: Vec<(u32, u32, f64)>,
        horizon: usize,
        potential: GibbsPotential<'a>,
        cell: f64,
    ) -> Self {
        let cell_count = ((1.0 / cell).floor() as i32).max(1);
        let mut cells: FxHashMap<(i32, i32), Vec<u32>> = FxHashMap::default();
        for (a, &(r, o, _)) in atoms.iter().enumerate() {
            let p = table.position(r as usize, o as usize);
            cells.entry(cell_of(p, cell_count)).or_default().push(a as u32);
        }
        AtomOrbits { table, atoms, horizon, potential, cells, cell_count }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn weight(&self, atom: usize) -> f64 {
        self.atoms[atom].2
    }

    /// Position of atom `atom` after `k` steps.
    #[inline]
    pub fn position(&self, atom: usize, k: usize) -> [f32; 2] {
        let (r, o, _) = self.atoms[atom];
        self.table.position(r as usize, o as usize + k)
    }

    pub fn point(&self, atom: usize) -> TorusPoint {
        let p = self.position(atom, 0);
        TorusPoint::new(p[0] as f64, p[1] as f64)
    }

    /// `S_n phi_geo` along atom `atom`.
    pub fn geo_sum(&self, atom: usize, n: usize) -> f64 {
        let (r, o, _) = self.atoms[atom];
        let (r, o) = (r as usize, o as usize);
        self.table.geo_sum(r, o + n).unwrap() - self.table.geo_sum(r, o).unwrap()
    }

    /// `S_n phi` along atom `atom` for the potential the orbits were built with.
    pub fn potential_sum(&self, atom: usize, n: usize) -> f64 {
        let (r, o, _) = self.atoms[atom];
        table_potential_sum(&self.table, &self.potential, r as usize, o as usize, o as usize + n)
    }

    /// `mu(B_n(x, scale))` for the orbit `x_0, ..., x_{n-1}`, by atom counting.
    ///
    /// `scale` must not exceed the cell size the orbits were indexed with.
    pub fn ball_mass(&self, orbit: &[[f32; 2]], n: usize, scale: f64) -> Result<f64> {
        if n == 0 || n > self.horizon || orbit.len() < n {
            return Err(KatokError::Domain(format!("ball length must lie in 1..={}", self.horizon)));
        }
        if scale > 1.0 / self.cell_count as f64 + 1e-12 {
            return Err(KatokError::Domain("ball scale exceeds the index cell size".into()));
        }
        let (cu, cv) = cell_of(orbit[0], self.cell_count);
        let m = self.cell_count;
        let mut keys: Vec<(i32, i32)> = Vec::with_capacity(9);
        for du in -1..=1 {
            for dv in -1..=1 {
                let key = ((cu + du).rem_euclid(m), (cv + dv).rem_euclid(m));
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }
        let mut mass = 0.0;
        for key in keys {
            let Some(list) = self.cells.get(&key) else { continue };
            for &a in list {
                let a = a as usize;
                if (0..n).all(|k| torus_dist_f32(orbit[k], self.position(a, k)) < scale) {
                    mass += self.atoms[a].2;
                }
            }
        }
        Ok(mass)
    }

    /// Orbit of atom `atom` over `n` steps.
    pub fn orbit(&self, atom: usize, n: usize) -> Vec<[f32; 2]> {
        (0..n).map(|k| self.position(atom, k)).collect()
    }

    /// Draw atoms with probability proportional to their weight.
    pub fn sample_atoms(&self, count: usize, seed: u64) -> Result<Vec<usize>> {
        let dist = WeightedIndex::new(self.atoms.iter().map(|a| a.2))
            .map_err(|e| KatokError::Domain(format!("cannot sample atoms: {e}")))?;
        let mut rng = trial_rng(seed, 0);
        Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
    }
}

/// Starting points of a measure's atoms, on the leaf when they came from one.
fn source_pool(m: &WeightedOrbitMeasure) -> PoolSpec {
    match &m.source {
        Some((pool, rows)) => pool.subset(rows),
        None => PoolSpec::Points(m.atoms.iter().map(|a| a.0).collect()),
    }
}

fn cell_of(p: [f32; 2], m: i32) -> (i32, i32) {
    let c = |x: f32| (((x as f64).rem_euclid(1.0) * m as f64).floor() as i32).min(m - 1);
    (c(p[0]), c(p[1]))
}

/// `rho(x, n) = log mu(B_n(x, scale)) + n P - S_n phi(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsRatio {
    pub n: usize,
    pub mass: f64,
    /// The log-ratio, or its upper bound when the ball holds no atoms.
    pub rho: f64,
    /// The ball missed every atom; `rho` uses mass `1/atoms`.
    pub censored: bool,
}

pub fn gibbs_ratio(
    orbits: &AtomOrbits<'_>,
    orbit: &[[f32; 2]],
    n: usize,
    birkhoff: f64,
    p_hat: f64,
    scale: f64,
) -> Result<GibbsRatio> {
    let mass = orbits.ball_mass(orbit, n, scale)?;
    let censored = mass <= 0.0;
    let log_mass = if censored { -(orbits.len() as f64).ln() } else { mass.ln() };
    Ok(GibbsRatio { n, mass, rho: log_mass + n as f64 * p_hat - birkhoff, censored })
}

/// Gibbs log-ratios at `mu`-sampled atoms over several lengths.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsReport {
    pub n_values: Vec<usize>,
    /// `max |rho(x, n)| / n` over resolved samples, per `n`.
    pub rho_max: Vec<f64>,
    /// Mean of `rho(x, n)` over resolved samples, per `n`.
    pub rho_mean: Vec<f64>,
    /// Samples whose ball held no atom, per `n`.
    pub censored: Vec<usize>,
    pub samples: usize,
    /// `rho_max` strictly decreases along `n_values` and nothing is censored.
    pub sublinear: bool,
    pub ratios: Vec<Vec<GibbsRatio>>,
}

pub fn gibbs_diagnostic(
    orbits: &AtomOrbits<'_>,
    n_values: &[usize],
    samples: usize,
    p_hat: f64,
    scale: f64,
    seed: u64,
) -> Result<GibbsReport> {
    let picks = orbits.sample_atoms(samples, seed)?;
    let mut rho_max = Vec::with_capacity(n_values.len());
    let mut rho_mean = Vec::with_capacity(n_values.len());
    let mut censored = Vec::with_capacity(n_values.len());
    let mut ratios = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let row: Vec<Result<GibbsRatio>> = par_map(picks.len(), |j| {
            let a = picks[j];
            gibbs_ratio(orbits, &orbits.orbit(a, n), n, orbits.potential_sum(a, n), p_hat, scale)
        });
        let row: Vec<GibbsRatio> = row.into_iter().collect::<Result<_>>()?;
        let resolved: Vec<f64> = row.iter().filter(|r| !r.censored).map(|r| r.rho).collect();
        rho_max.push(resolved.iter().map(|r| r.abs() / n as f64).fold(0.0, f64::max));
        rho_mean.push(if resolved.is_empty() {
            f64::NAN
        } else {
            resolved.iter().sum::<f64>() / resolved.len() as f64
        });
        censored.push(row.len() - resolved.len());
        ratios.push(row);
    }
    let sublinear = censored.iter().all(|&c| c == 0) && rho_max.windows(2).all(|w| w[1] < w[0]);
    Ok(GibbsReport { n_values: n_values.to_vec(), rho_max, rho_mean, censored, samples, sublinear, ratios })
}

/// Large-deviation rate function of an observable on a grid of displacements.
#[derive(Debug, Clone, Serialize)]
pub struct RateFunction {
    pub delta_grid: Vec<f64>,
    pub q: Vec<f64>,
    pub observable: String,
    /// Centre `int f d mu` of the deviations.
    pub mean: f64,
    pub s_grid: Vec<f64>,
    /// `Lambda(s) = P(phi + s f) - P(phi)`.
    pub lambda: Vec<f64>,
}

/// Rate function through the Legendre transforms of `Lambda` restricted to `s >= 0`
/// and `s <= 0`.
///
/// `q(delta)` is the smaller of the two one-sided transforms over displacements of at
/// least `delta` above and below `mean`, so it is non-decreasing by construction,
/// vanishes at `delta = 0`, and is clipped at zero.
pub fn rate_function(
    s_grid: &[f64],
    lambda: &[f64],
    mean: f64,
    delta_grid: &[f64],
    observable: &str,
) -> Result<RateFunction> {
    if s_grid.len() != lambda.len() || s_grid.is_empty() {
        return Err(KatokError::Domain("s grid and Lambda values must match and be non-empty".into()));
    }
    if delta_grid.iter().any(|&d| !(d >= 0.0)) || delta_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(KatokError::Domain("delta grid must be non-negative and ascending".into()));
    }
    let one_sided = |a: f64, upper: bool| -> f64 {
        s_grid
            .iter()
            .zip(lambda)
            .filter(|(&s, _)| if upper { s >= 0.0 } else { s <= 0.0 })
            .map(|(&s, &l)| s * a - l)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let up: Vec<f64> = delta_grid.iter().map(|&d| one_sided(mean + d, true)).collect();
    let down: Vec<f64> = delta_grid.iter().map(|&d| one_sided(mean - d, false)).collect();
    let mut q = vec![0.0; delta_grid.len()];
    let (mut best_up, mut best_down) = (f64::INFINITY, f64::INFINITY);
    for k in (0..delta_grid.len()).rev() {
        best_up = best_up.min(up[k]);
        best_down = best_down.min(down[k]);
        q[k] = if delta_grid[k] == 0.0 { 0.0 } else { best_up.min(best_down).max(0.0) };
    }
    Ok(RateFunction {
        delta_grid: delta_grid.to_vec(),
        q,
        observable: observable.to_string(),
        mean,
        s_grid: s_grid.to_vec(),
        lambda: lambda.to_vec(),
    })
}

/// `Lambda(s) = P(t0 + s) - P(t0)` from a geometric pressure curve, for the
/// observable `phi_geo` under the equilibrium state of `t0 phi_geo`, with the centre
/// `P'(t0)` by central difference.
pub fn geometric_lambda(curve: &crate::pressure::PressureCurve, t0: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let i0 = curve
        .t_grid
        .iter()
        .position(|&t| (t - t0).abs() < 1e-9)
        .ok_or_else(|| KatokError::Domain(format!("t = {t0} is not on the curve grid")))?;
    if i0 == 0 || i0 + 1 == curve.t_grid.len() {
        return Err(KatokError::Domain("t0 needs grid neighbours on both sides".into()));
    }
    let p0 = curve.p[i0];
    let s: Vec<f64> = curve.t_grid.iter().map(|t| t - t0).collect();
    let l: Vec<f64> = curve.p.iter().map(|p| p - p0).collect();
    let mean = (curve.p[i0 + 1] - curve.p[i0 - 1]) / (curve.t_grid[i0 + 1] - curve.t_grid[i0 - 1]);
    Ok((s, l, mean))
}

/// Decay of `mu{ |S_n f / n - mean| >= delta }` with `n`.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationDecay {
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub mass: Vec<f64>,
    /// The deviation set held no atom at this `n`; the mass is at most `1/atoms`.
    pub censored: Vec<bool>,
    pub fit: Option<LinearFit>,
    /// Minus the slope of `log mass` against `n` over uncensored lengths.
    pub exponent: f64,
    /// Lower bound on the exponent implied by the first censored length, if any.
    pub censored_bound: Option<f64>,
}

pub fn empirical_deviation_decay(
    orbits: &AtomOrbits<'_>,
    observable_sum: impl Fn(usize, usize) -> f64 + Sync,
    mean: f64,
    n_grid: &[usize],
    delta: f64,
) -> Result<DeviationDecay> {
    if n_grid.iter().any(|&n| n == 0 || n > orbits.horizon()) {
        return Err(KatokError::Domain(format!("lengths must lie in 1..={}", orbits.horizon())));
    }
    let floor = 1.0 / orbits.len() as f64;
    let mut mass = Vec::with_capacity(n_grid.len());
    let mut censored = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let hits: Vec<f64> = par_map(orbits.len(), |a| {
            let avg = observable_sum(a, n) / n as f64;
            if (avg - mean).abs() >= delta {
                orbits.weight(a)
            } else {
                0.0
            }
        });
        let m: f64 = hits.iter().sum();
        censored.push(m <= 0.0);
        mass.push(m);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        n_grid.iter().zip(&mass).filter(|(_, &m)| m > 0.0).map(|(&n, &m)| (n as f64, m.ln())).unzip();
    let fit = if xs.len() >= 2 { linear_fit(&xs, &ys).ok() } else { None };
    let exponent = fit.as_ref().map_or(f64::NAN, |f| -f.slope);
    let censored_bound = n_grid.iter().zip(&censored).find(|(_, &c)| c).map(|(&n, _)| -floor.ln() / n as f64);
    Ok(DeviationDecay { delta, n_grid: n_grid.to_vec(), mass, censored, fit, exponent, censored_bound })
}
