//! `(delta, n)`-separated sets, weighted partition sums and regression estimates of
//! topological pressure, including the geometric family `t -> P(t phi_geo)`.
//!
//! Orbits of a deterministic pool of starting points are computed once into an
//! [`OrbitTable`]; separated sets are then selected greedily for each `n`.

use nalgebra::Vector2;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::decomposition::{bowen_ball_variation, CollectionParams, Potential, BALL_SAMPLES};
use crate::error::{KatokError, Result};
use crate::geometry::{frame, EigenVec2, TorusPoint};
use crate::katok::{KatokMap, OrbitCursor};
use crate::parallel::{par_map, trial_rng};
use crate::stats::{linear_fit, log_sum_exp, LinearFit};
use crate::tangent::{unstable_direction, DEFAULT_BURN_IN};

/// Deterministic source of candidate points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PoolSpec {
    /// `resolution^2` cell centers in lexicographic order.
    Grid { resolution: usize },
    /// `count` evenly spaced points `s e_u`, `s` in `[offset, offset + length]`, on the
    /// unstable manifold of the origin.  Their unstable direction is exactly `e_u`.
    UnstableLeaf { offset: f64, length: f64, count: usize },
    /// Explicit starting points, such as the atoms of a measure.
    Points(Vec<TorusPoint>),
    /// Explicit points `s e_u` on the unstable manifold of the origin.
    LeafPoints(Vec<f64>),
}

impl PoolSpec {
    pub fn len(&self) -> usize {
        match *self {
            PoolSpec::Grid { resolution } => resolution * resolution,
            PoolSpec::UnstableLeaf { count, .. } => count,
            PoolSpec::Points(ref v) => v.len(),
            PoolSpec::LeafPoints(ref v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starting cursor of pool point `i`.
    pub fn start(&self, i: usize) -> OrbitCursor {
        match *self {
            PoolSpec::Grid { resolution } => {
                let h = 1.0 / resolution as f64;
                let (a, b) = (i / resolution, i % resolution);
                OrbitCursor::at(TorusPoint::new((a as f64 + 0.5) * h, (b as f64 + 0.5) * h))
            }
            PoolSpec::UnstableLeaf { offset, length, count } => {
                let s = if count <= 1 { offset } else { offset + length * i as f64 / (count - 1) as f64 };
                OrbitCursor::at_chart(EigenVec2::new(s, 0.0))
            }
            PoolSpec::Points(ref v) => OrbitCursor::at(v[i]),
            PoolSpec::LeafPoints(ref v) => OrbitCursor::at_chart(EigenVec2::new(v[i], 0.0)),
        }
    }

    /// The pool restricted to the given indices, keeping leaf points on the leaf.
    pub fn subset(&self, indices: &[usize]) -> PoolSpec {
        match *self {
            PoolSpec::UnstableLeaf { offset, length, count } => PoolSpec::LeafPoints(
                indices
                    .iter()
                    .map(|&i| if count <= 1 { offset } else { offset + length * i as f64 / (count - 1) as f64 })
                    .collect(),
            ),
            PoolSpec::LeafPoints(ref v) => PoolSpec::LeafPoints(indices.iter().map(|&i| v[i]).collect()),
            _ => PoolSpec::Points(indices.iter().map(|&i| self.start(i).point).collect()),
        }
    }
}

/// Pool used for the geometric pressure curve: a piece of the unstable manifold of the
/// origin long enough that escaping orbits dominate for `t < 1` while the fixed point
/// still dominates for `t > 1` over the fitted lengths.
pub const CURVE_POOL: PoolSpec = PoolSpec::UnstableLeaf { offset: 0.0, length: 0.04, count: 10_000_000 };
/// Orbit lengths fitted for the pressure curve.
pub const CURVE_N_RANGE: [usize; 5] = [11, 12, 13, 14, 15];
/// Separation scale for the pressure curve.
pub const CURVE_DELTA: f64 = 1.0 / 16.0;

/// Positions and Birkhoff sums along the orbits of every pool point.
#[derive(Debug, Clone)]
pub struct OrbitTable {
    pub pool: PoolSpec,
    pub n_max: usize,
    len: usize,
    /// `(u, v)` at times `0..n_max`, row-major by point.
    positions: Vec<[f32; 2]>,
    /// Prefix sums `S_0 .. S_{n_max}` of `phi_geo`, when requested.
    geo: Option<Vec<f64>>,
    /// Prefix sums for each extra potential.
    sums: Vec<(String, Vec<f64>)>,
}

const TABLE_CHUNK: usize = 4096;

impl OrbitTable {
    /// Iterate every pool point `n_max - 1` times, recording positions, and optionally the
    /// geometric potential and extra potentials along the way.
    pub fn build(
        g: &KatokMap,
        pool: PoolSpec,
        n_max: usize,
        with_geo: bool,
        potentials: &[(&str, Potential<'_>)],
    ) -> Result<Self> {
        if n_max == 0 {
            return Err(KatokError::Domain("orbit table needs n_max >= 1".into()));
        }
        let len = pool.len();
        if len == 0 {
            return Err(KatokError::EmptyPool("pool has no points".into()));
        }
        let chunks = len.div_ceil(TABLE_CHUNK);
        type Chunk = (Vec<[f32; 2]>, Vec<f64>, Vec<Vec<f64>>);
        let parts: Vec<Result<Chunk>> = par_map(chunks, |c| {
            let lo = c * TABLE_CHUNK;
            let hi = (lo + TABLE_CHUNK).min(len);
            let mut pos = Vec::with_capacity((hi - lo) * n_max);
            let mut geo = Vec::with_capacity(if with_geo { (hi - lo) * (n_max + 1) } else { 0 });
            let mut extra: Vec<Vec<f64>> =
                potentials.iter().map(|_| Vec::with_capacity((hi - lo) * (n_max + 1))).collect();
            for i in lo..hi {
                let mut cur = pool.start(i);
                let mut e = if with_geo { initial_unstable(g, &pool, &cur)? } else { Vector2::zeros() };
                let mut acc = 0.0;
                let mut acc_extra = vec![0.0; potentials.len()];
                if with_geo {
                    geo.push(0.0);
                }
                for col in extra.iter_mut() {
                    col.push(0.0);
                }
                for k in 0..n_max {
                    let p = cur.point;
                    pos.push([p.u as f32, p.v as f32]);
                    for (j, (_, f)) in potentials.iter().enumerate() {
                        acc_extra[j] += f(&p);
                        extra[j].push(acc_extra[j]);
                    }
                    if with_geo {
                        let (next, w) = cur.step_tangent(g, &e)?;
                        let s = w.norm();
                        acc -= s.ln();
                        geo.push(acc);
                        e = w / s;
                        cur = next;
                    } else if k + 1 < n_max {
                        cur = cur.step(g)?;
                    }
                }
            }
            Ok((pos, geo, extra))
        });
        let mut positions = Vec::with_capacity(len * n_max);
        let mut geo = with_geo.then(|| Vec::with_capacity(len * (n_max + 1)));
        let mut sums: Vec<(String, Vec<f64>)> =
            potentials.iter().map(|(name, _)| (name.to_string(), Vec::with_capacity(len * (n_max + 1)))).collect();
        for part in parts {
            let (p, gsum, extra) = part?;
            positions.extend_from_slice(&p);
            if let Some(v) = geo.as_mut() {
                v.extend_from_slice(&gsum);
            }
            for (dst, src) in sums.iter_mut().zip(extra) {
                dst.1.extend_from_slice(&src);
            }
        }
        Ok(OrbitTable { pool, n_max, len, positions, geo, sums })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn position(&self, i: usize, k: usize) -> [f32; 2] {
        self.positions[i * self.n_max + k]
    }

    pub fn point(&self, i: usize) -> TorusPoint {
        self.pool.start(i).point
    }

    /// `S_n phi_geo` of pool point `i`.
    #[inline]
    pub fn geo_sum(&self, i: usize, n: usize) -> Option<f64> {
        self.geo.as_ref().map(|v| v[i * (self.n_max + 1) + n])
    }

    /// Birkhoff sum of a named extra potential.
    pub fn potential_sum(&self, name: &str, i: usize, n: usize) -> Option<f64> {
        self.sums.iter().find(|(k, _)| k == name).map(|(_, v)| v[i * (self.n_max + 1) + n])
    }

    /// `d_n` between pool points `i` and `j` (single precision positions).
    pub fn bowen_distance(&self, i: usize, j: usize, n: usize) -> f64 {
        (0..n).map(|k| torus_dist_f32(self.position(i, k), self.position(j, k))).fold(0.0, f64::max)
    }

    /// `chi` values along the first `n` iterates of pool point `i`.
    pub fn chi_sequence(&self, i: usize, n: usize, params: &CollectionParams) -> Vec<u8> {
        (0..n)
            .map(|k| {
                let [u, v] = self.position(i, k);
                u8::from(TorusPoint::new(u as f64, v as f64).norm_from_origin() > params.chi_radius)
            })
            .collect()
    }
}

fn initial_unstable(g: &KatokMap, pool: &PoolSpec, cur: &OrbitCursor) -> Result<Vector2<f64>> {
    match pool {
        PoolSpec::UnstableLeaf { .. } | PoolSpec::LeafPoints(_) => Ok(frame().e_u),
        PoolSpec::Grid { .. } | PoolSpec::Points(_) => {
            let l = unstable_direction(g, &cur.point, DEFAULT_BURN_IN)?;
            if !l.converged {
                return Err(KatokError::NonConvergence { change: f64::NAN, burn_in: l.burn_in });
            }
            Ok(l.direction())
        }
    }
}

#[inline]
fn wrap_f32(d: f32) -> f64 {
    let d = d as f64;
    d - d.round()
}

#[inline]
pub(crate) fn torus_dist_f32(a: [f32; 2], b: [f32; 2]) -> f64 {
    let du = wrap_f32(a[0] - b[0]);
    let dv = wrap_f32(a[1] - b[1]);
    (du * du + dv * dv).sqrt()
}

/// Where a separated set's candidates came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SetSource {
    FullPool,
    CollectionFiltered,
}

/// A `(delta, n)`-separated subset of a pool, stored as pool indices.
#[derive(Debug, Clone, Serialize)]
pub struct SeparatedSet {
    pub n: usize,
    pub delta: f64,
    pub indices: Vec<u32>,
    pub source: SetSource,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn points(&self, table: &OrbitTable) -> Vec<TorusPoint> {
        self.indices.iter().map(|&i| table.point(i as usize)).collect()
    }
}

/// Spatial hash over the positions at two times, with cells no smaller than `delta`.
struct CellIndex {
    count: u32,
    t_late: usize,
    t_mid: usize,
    buckets: FxHashMap<u64, Vec<u32>>,
}

impl CellIndex {
    fn new(delta: f64, n: usize) -> Self {
        let count = ((1.0 / delta).floor() as u32).max(1);
        CellIndex { count, t_late: n - 1, t_mid: (n - 1) / 2, buckets: FxHashMap::default() }
    }

    #[inline]
    fn cell(&self, p: [f32; 2]) -> (u32, u32) {
        let c = self.count as f64;
        let f = |x: f32| {
            let y = (x as f64).rem_euclid(1.0);
            ((y * c) as u32).min(self.count - 1)
        };
        (f(p[0]), f(p[1]))
    }

    #[inline]
    fn key(&self, a: (u32, u32), b: (u32, u32)) -> u64 {
        let c = self.count as u64;
        ((a.0 as u64 * c + a.1 as u64) * c + b.0 as u64) * c + b.1 as u64
    }

    fn insert(&mut self, table: &OrbitTable, i: u32) {
        let a = self.cell(table.position(i as usize, self.t_late));
        let b = self.cell(table.position(i as usize, self.t_mid));
        let k = self.key(a, b);
        self.buckets.entry(k).or_default().push(i);
    }

    fn neighbors(&self, c: (u32, u32)) -> Vec<(u32, u32)> {
        let n = self.count as i64;
        let mut out = Vec::with_capacity(9);
        for du in -1..=1i64 {
            for dv in -1..=1i64 {
                let cell = (((c.0 as i64 + du).rem_euclid(n)) as u32, ((c.1 as i64 + dv).rem_euclid(n)) as u32);
                if !out.contains(&cell) {
                    out.push(cell);
                }
            }
        }
        out
    }

    /// Indexed points that could lie within `delta` of pool point `i` in `d_n`.
    fn for_candidates(&self, table: &OrbitTable, i: usize, mut visit: impl FnMut(u32) -> bool) -> bool {
        let late = self.neighbors(self.cell(table.position(i, self.t_late)));
        let mid = self.neighbors(self.cell(table.position(i, self.t_mid)));
        for a in &late {
            for b in &mid {
                if let Some(bucket) = self.buckets.get(&self.key(*a, *b)) {
                    for &j in bucket {
                        if visit(j) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[inline]
fn within(table: &OrbitTable, i: usize, j: usize, n: usize, delta: f64) -> bool {
    // Latest times first: separation usually appears there.
    (0..n).rev().all(|k| torus_dist_f32(table.position(i, k), table.position(j, k)) < delta)
}

/// Greedy `(delta, n)`-separated selection from the pool.
///
/// Candidates are scanned in pool order, or by descending `order_key` when given
/// (ties broken by pool index), restricted to those passing `filter`.  A candidate is
/// accepted unless some accepted point is within `delta` in `d_n`.
pub fn build_separated_set(
    table: &OrbitTable,
    n: usize,
    delta: f64,
    order_key: Option<&[f64]>,
    filter: Option<&[bool]>,
) -> Result<SeparatedSet> {
    if !(delta > 0.0) {
        return Err(KatokError::Domain("delta must be positive".into()));
    }
    if n == 0 || n > table.n_max {
        return Err(KatokError::Domain(format!("n must lie in 1..={}", table.n_max)));
    }
    let mut order: Vec<u32> = (0..table.len() as u32).filter(|&i| filter.map_or(true, |f| f[i as usize])).collect();
    if order.is_empty() {
        return Err(KatokError::EmptyPool("collection filter removed every pool point".into()));
    }
    if let Some(w) = order_key {
        order.sort_by(|&a, &b| w[b as usize].total_cmp(&w[a as usize]).then(a.cmp(&b)));
    }
    let mut index = CellIndex::new(delta, n);
    let mut accepted: Vec<u32> = Vec::new();
    for &c in &order {
        let ci = c as usize;
        if let Some(&last) = accepted.last() {
            if within(table, ci, last as usize, n, delta) {
                continue;
            }
        }
        let covered = index.for_candidates(table, ci, |j| within(table, ci, j as usize, n, delta));
        if !covered {
            accepted.push(c);
            index.insert(table, c);
        }
    }
    Ok(SeparatedSet {
        n,
        delta,
        indices: accepted,
        source: if filter.is_some() { SetSource::CollectionFiltered } else { SetSource::FullPool },
    })
}

/// Post-hoc check of a separated set: pairwise separation and maximality against the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SetCheck {
    pub separated: bool,
    pub maximal: bool,
    /// Pairs compared exactly (all others are separated at the final time).
    pub pairs_checked: u64,
}

/// Pairs not sharing neighboring cells at time `n - 1` are farther than `delta` there,
/// so comparing the remaining pairs in full is an exhaustive check.
pub fn verify_separated_set(table: &OrbitTable, set: &SeparatedSet, filter: Option<&[bool]>) -> SetCheck {
    let n = set.n;
    let delta = set.delta;
    let count = ((1.0 / delta).floor() as u32).max(1);
    let idx = CellIndex { count, t_late: n - 1, t_mid: n - 1, buckets: FxHashMap::default() };
    let mut late: FxHashMap<(u32, u32), Vec<u32>> = FxHashMap::default();
    for &i in &set.indices {
        late.entry(idx.cell(table.position(i as usize, n - 1))).or_default().push(i);
    }
    let mut pairs = 0u64;
    let mut separated = true;
    for &i in &set.indices {
        for c in idx.neighbors(idx.cell(table.position(i as usize, n - 1))) {
            for &j in late.get(&c).map(|v| v.as_slice()).unwrap_or(&[]) {
                if j > i {
                    pairs += 1;
                    if within(table, i as usize, j as usize, n, delta) {
                        separated = false;
                    }
                }
            }
        }
    }
    let mut maximal = true;
    for p in 0..table.len() {
        if filter.is_some_and(|f| !f[p]) {
            continue;
        }
        let near = idx.neighbors(idx.cell(table.position(p, n - 1))).into_iter().any(|c| {
            late.get(&c).is_some_and(|v| v.iter().any(|&j| j as usize == p || within(table, p, j as usize, n, delta)))
        });
        if !near {
            maximal = false;
            break;
        }
    }
    SetCheck { separated, maximal, pairs_checked: pairs }
}

/// `log sum_{x in E} exp(S_n phi(x))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSumRecord {
    pub n: usize,
    pub delta: f64,
    pub potential: String,
    pub log_sum: f64,
    pub set_size: usize,
}

/// Log-sum-exp of the given Birkhoff sums over the set, reduced in set order.
pub fn partition_sum(set: &SeparatedSet, potential: &str, sums: impl Fn(usize) -> f64) -> PartitionSumRecord {
    let values: Vec<f64> = set.indices.iter().map(|&i| sums(i as usize)).collect();
    PartitionSumRecord {
        n: set.n,
        delta: set.delta,
        potential: potential.to_string(),
        log_sum: log_sum_exp(&values),
        set_size: set.len(),
    }
}

/// Which Birkhoff sums weight a pressure computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting<'a> {
    /// `t phi_geo`.
    Geometric(f64),
    /// A potential recorded in the table, plus a constant shift.
    Named(&'a str, f64),
    /// The constant potential `c`.
    Constant(f64),
}

impl Weighting<'_> {
    fn id(&self) -> String {
        match self {
            Weighting::Geometric(t) => format!("geo*{t}"),
            Weighting::Named(name, c) => format!("{name}+{c}"),
            Weighting::Constant(c) => format!("const {c}"),
        }
    }

    fn sum(&self, table: &OrbitTable, i: usize, n: usize) -> Result<f64> {
        match *self {
            Weighting::Geometric(t) => table
                .geo_sum(i, n)
                .map(|s| t * s)
                .ok_or_else(|| KatokError::Domain("table was built without the geometric potential".into())),
            Weighting::Named(name, c) => table
                .potential_sum(name, i, n)
                .map(|s| s + n as f64 * c)
                .ok_or_else(|| KatokError::Domain(format!("potential {name} not recorded"))),
            Weighting::Constant(c) => Ok(n as f64 * c),
        }
    }
}

/// Regression estimate of pressure with its fit and the estimates at smaller scales.
#[derive(Debug, Clone, Serialize)]
pub struct PressureEstimate {
    pub estimate: f64,
    pub fit: LinearFit,
    pub delta: f64,
    pub records: Vec<PartitionSumRecord>,
    /// `(delta, estimate)` at the additional scales.
    pub per_delta: Vec<(f64, f64)>,
}

fn fit_log_sums(records: &[PartitionSumRecord]) -> Result<LinearFit> {
    if records.len() < 2 {
        return Err(KatokError::DegenerateFit("need at least two lengths".into()));
    }
    if records.iter().all(|r| r.log_sum == records[0].log_sum) {
        return Err(KatokError::DegenerateFit("all partition sums are equal; the pool is too coarse".into()));
    }
    let xs: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.log_sum).collect();
    linear_fit(&xs, &ys)
}

/// Collection filter for pool points at length `n`.
pub type SegmentFilter<'a> = &'a (dyn Fn(&OrbitTable, usize, usize) -> bool + Sync);

fn estimate_at(
    table: &OrbitTable,
    weighting: Weighting<'_>,
    delta: f64,
    n_range: &[usize],
    weighted_order: bool,
    filter: Option<SegmentFilter<'_>>,
) -> Result<(LinearFit, Vec<PartitionSumRecord>)> {
    let mut records = Vec::with_capacity(n_range.len());
    for &n in n_range {
        let sums: Vec<f64> = (0..table.len()).map(|i| weighting.sum(table, i, n)).collect::<Result<_>>()?;
        let mask: Option<Vec<bool>> = filter.map(|f| par_map(table.len(), |i| f(table, i, n)));
        let set = build_separated_set(table, n, delta, weighted_order.then_some(sums.as_slice()), mask.as_deref())?;
        records.push(partition_sum(&set, &weighting.id(), |i| sums[i]));
    }
    Ok((fit_log_sums(&records)?, records))
}

pub const MIN_FIT_LENGTHS: usize = 4;

/// Pressure of a potential from the slope of `log Lambda_n` against `n`.
///
/// Sets are selected in descending-weight order.  `extra_deltas` are evaluated the same
/// way to exhibit stability in `delta`.  `filter` restricts each set to segments passing
/// a collection membership test.
pub fn pressure_estimate(
    table: &OrbitTable,
    weighting: Weighting<'_>,
    delta: f64,
    n_range: &[usize],
    extra_deltas: &[f64],
    filter: Option<SegmentFilter<'_>>,
) -> Result<PressureEstimate> {
    if n_range.len() < MIN_FIT_LENGTHS {
        return Err(KatokError::Domain(format!("n_range needs at least {MIN_FIT_LENGTHS} values")));
    }
    let (fit, records) = estimate_at(table, weighting, delta, n_range, true, filter)?;
    let mut per_delta = Vec::with_capacity(extra_deltas.len());
    for &d in extra_deltas {
        let (f, _) = estimate_at(table, weighting, d, n_range, true, filter)?;
        per_delta.push((d, f.slope));
    }
    Ok(PressureEstimate { estimate: fit.slope, fit, delta, records, per_delta })
}

/// Membership of `(x, n)` in the prefix collection, evaluated on table positions.
pub fn prefix_filter(params: CollectionParams) -> impl Fn(&OrbitTable, usize, usize) -> bool + Sync {
    move |table: &OrbitTable, i: usize, n: usize| {
        let chis = table.chi_sequence(i, n, &params);
        crate::decomposition::is_prefix_chi(&chis, params.r)
    }
}

/// Monte-Carlo lower estimate of `zeta(n) = sup |S_n phi(x) - S_n phi(y)|` over
/// `y` in `B_n(x, scale)`, from uniform `x` and leaf-offset `y`.
pub fn zeta_estimate(
    g: &KatokMap,
    potential: Potential<'_>,
    n: usize,
    scale: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(KatokError::Domain("zeta estimate needs at least one trial".into()));
    }
    let rows: Vec<Result<f64>> = par_map(trials, |j| {
        let mut rng = trial_rng(seed, j as u64);
        let x = TorusPoint::new(rng.gen(), rng.gen());
        bowen_ball_variation(g, &x, n, potential, scale, BALL_SAMPLES, &mut rng)
    });
    let mut worst = 0.0f64;
    for r in rows {
        worst = worst.max(r?);
    }
    Ok(worst)
}

/// Fit quality at one value of `t`.
#[derive(Debug, Clone, Serialize)]
pub struct CurveDiagnostic {
    pub t: f64,
    pub r2: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Estimated `t -> P(t phi_geo)` on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct PressureCurve {
    pub t_grid: Vec<f64>,
    pub p: Vec<f64>,
    pub diagnostics: Vec<CurveDiagnostic>,
    pub delta: f64,
    pub n_range: Vec<usize>,
    pub set_sizes: Vec<usize>,
    /// `log Lambda_n(t)` by `[t][n]`.
    pub log_sums: Vec<Vec<f64>>,
}

impl PressureCurve {
    /// A curve given by its values alone, without fit diagnostics.
    pub fn from_samples(t_grid: Vec<f64>, p: Vec<f64>) -> Self {
        PressureCurve {
            t_grid,
            p,
            diagnostics: Vec::new(),
            delta: 0.0,
            n_range: Vec::new(),
            set_sizes: Vec::new(),
            log_sums: Vec::new(),
        }
    }

    /// Largest violation `-min(P(t-h) - 2P(t) + P(t+h), 0)` of convexity.
    pub fn convexity_defect(&self) -> f64 {
        self.p.windows(3).map(|w| (-(w[0] - 2.0 * w[1] + w[2])).max(0.0)).fold(0.0, f64::max)
    }

    /// Largest increase between consecutive grid points.
    pub fn monotonicity_defect(&self) -> f64 {
        self.p.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max)
    }

    /// Linear interpolation of `P` at `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let g = &self.t_grid;
        if g.is_empty() || t < g[0] - 1e-12 || t > g[g.len() - 1] + 1e-12 {
            return None;
        }
        let i = g.partition_point(|&s| s <= t).clamp(1, g.len().max(2) - 1);
        if g.len() == 1 {
            return Some(self.p[0]);
        }
        let (a, b) = (g[i - 1], g[i]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        Some(self.p[i - 1] + w * (self.p[i] - self.p[i - 1]))
    }
}

/// The pressure curve of the geometric family.
///
/// One unweighted separated set per `n` is shared by every `t`, so the whole curve
/// costs a single orbit sweep and one set selection per length.
pub fn pressure_curve(table: &OrbitTable, t_grid: &[f64], delta: f64, n_range: &[usize]) -> Result<PressureCurve> {
    if n_range.len() < MIN_FIT_LENGTHS {
        return Err(KatokError::Domain(format!("n_range needs at least {MIN_FIT_LENGTHS} values")));
    }
    if table.geo.is_none() {
        return Err(KatokError::Domain("table was built without the geometric potential".into()));
    }
    let sets: Vec<SeparatedSet> =
        n_range.iter().map(|&n| build_separated_set(table, n, delta, None, None)).collect::<Result<_>>()?;
    let set_sizes = sets.iter().map(|s| s.len()).collect();
    let rows: Vec<Result<(f64, CurveDiagnostic, Vec<f64>)>> = par_map(t_grid.len(), |ti| {
        let t = t_grid[ti];
        let records: Vec<PartitionSumRecord> =
            sets.iter().map(|set| partition_sum(set, "geo", |i| t * table.geo_sum(i, set.n).unwrap())).collect();
        let fit = fit_log_sums(&records)?;
        let logs = records.iter().map(|r| r.log_sum).collect();
        Ok((fit.slope, CurveDiagnostic { t, r2: fit.r2, slope_se: fit.slope_se, intercept: fit.intercept }, logs))
    });
    let mut p = Vec::with_capacity(t_grid.len());
    let mut diagnostics = Vec::with_capacity(t_grid.len());
    let mut log_sums = Vec::with_capacity(t_grid.len());
    for r in rows {
        let (v, d, l) = r?;
        p.push(v);
        diagnostics.push(d);
        log_sums.push(l);
    }
    Ok(PressureCurve { t_grid: t_grid.to_vec(), p, diagnostics, delta, n_range: n_range.to_vec(), set_sizes, log_sums })
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + step * i as f64).collect()
}
