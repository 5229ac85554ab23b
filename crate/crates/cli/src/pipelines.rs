//! The named experiments. Each returns a [`Report`] with its tables and invariant suite.

use katoklab::config::{Command, RunConfig};
use katoklab::decomposition::{
    bowen_property_probe, classify_chi, classify_chi_scan, sqrt_distance_potential, CollectionParams, OrbitSegment,
};
use katoklab::geometry::{frame, torus_dist, TorusPoint};
use katoklab::gibbs::{
    build_mu_n, build_nu_n, empirical_deviation_decay, geometric_lambda, gibbs_diagnostic, rate_function, AtomOrbits,
    GibbsPotential,
};
use katoklab::katok::{KatokMap, OrbitCursor};
use katoklab::parallel::{par_map, trial_rng};
use katoklab::pressure::{pressure_curve, uniform_grid, zeta_estimate, OrbitTable, PoolSpec, PressureCurve};
use katoklab::spectrum::{finite_time_exponent, legendre, lyapunov_histogram, spectrum, LyapunovHistogram, Sampler};
use katoklab::tangent::{cone_check, derivative_check};
use katoklab::{KatokError, Result};
use rand::Rng;
use serde_json::json;

use crate::report::{cell, Report, Table};

/// Ball radius of the Gibbs diagnostic, in units of epsilon.
const GIBBS_SCALE: f64 = 6.0;

pub fn run_pipeline(cfg: &RunConfig) -> Result<Report> {
    let g = KatokMap::new(cfg.params)?;
    match cfg.command {
        Command::Orbit => orbit(cfg, &g),
        Command::Lyapunov => lyapunov(cfg, &g),
        Command::PressureCurve => pressure(cfg, &g),
        Command::Spectrum => spectrum_pipeline(cfg, &g),
        Command::GibbsCheck => gibbs_check(cfg, &g),
        Command::Ldp => ldp(cfg, &g),
        Command::DecompStats => decomp_stats(cfg, &g),
        Command::Probes => probes(cfg, &g),
    }
}

fn orbit(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let mut rep = Report::new("orbit");
    let mut rng = trial_rng(cfg.seed, 0);
    let mut x = TorusPoint::new(rng.gen(), rng.gen());
    let mut table = Table::new("orbit.csv", &["k", "u", "v", "dist_origin"]);
    let (mut worst_return, mut worst_conj) = (0.0f64, 0.0f64);
    for k in 0..=cfg.settings.orbit_steps {
        table.push(vec![k.to_string(), cell(x.u), cell(x.v), cell(x.norm_from_origin())]);
        let y = g.try_apply(&x)?;
        worst_return = worst_return.max(torus_dist(&g.try_apply_inv(&y)?, &x));
        worst_conj = worst_conj.max(torus_dist(&g.phi(&y), &g.try_apply_tilde(&g.phi(&x))?));
        x = y;
    }
    rep.assert("inverse round trip", worst_return < 1e-9, format!("max distance {worst_return:e}"));
    rep.assert("conjugacy phi G = G~ phi", worst_conj < 1e-9, format!("max distance {worst_conj:e}"));
    rep.results =
        json!({ "steps": cfg.settings.orbit_steps, "round_trip_error": worst_return, "conjugacy_error": worst_conj });
    rep.tables.push(table);
    Ok(rep)
}

fn histogram_table(file: &str, h: &LyapunovHistogram) -> Table {
    let mut t = Table::new(file, &["bin_center", "count"]);
    for (c, n) in h.bin_centers.iter().zip(&h.counts) {
        t.push(vec![cell(*c), n.to_string()]);
    }
    t
}

fn lyapunov(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let s = &cfg.settings;
    let mut rep = Report::new("lyapunov");
    let ll = frame().log_lambda;
    let leb = lyapunov_histogram(g, s.lyapunov_n, s.lyapunov_samples, Sampler::Lebesgue, s.histogram_bins, cfg.seed)?;
    let quarter = (s.lyapunov_n / 4).max(1);
    let short = lyapunov_histogram(g, quarter, s.lyapunov_samples, Sampler::Lebesgue, s.histogram_bins, cfg.seed)?;
    let linger = lyapunov_histogram(
        g,
        s.lyapunov_linger_n,
        s.lyapunov_linger_samples,
        Sampler::LingerBiased,
        s.histogram_bins,
        cfg.seed ^ 0x5eed,
    )?;
    let origin = finite_time_exponent(g, OrbitCursor::at(TorusPoint::ORIGIN), s.lyapunov_linger_n)? + 0.0;
    rep.assert("fixed point exponent is zero", origin == 0.0, format!("{origin}"));
    let finite = leb.exponents.iter().chain(&linger.exponents).all(|x| x.is_finite() && *x >= 0.0);
    rep.assert("exponents finite and non-negative", finite, String::new());
    let low = linger.exponents.iter().filter(|&&x| x < leb.mean / 2.0).count();
    rep.assert(
        "lingering orbits fall below half the Lebesgue exponent",
        2 * low > linger.exponents.len(),
        format!("{low} of {}", linger.exponents.len()),
    );
    let rel = (leb.mean - ll).abs() / ll;
    rep.report("Lebesgue mean near log lambda (2%)", rel < 0.02, format!("mean {} ({rel:.2e} relative)", leb.mean));
    let ratio = if leb.std > 0.0 { short.std / leb.std } else { f64::INFINITY };
    rep.report(
        "spread shrinks like n^-1/2",
        ratio > 1.3 && ratio < 3.5,
        format!("std ratio {ratio} for n/4 against n"),
    );
    rep.results = json!({
        "lambda_plus_m": leb.mean,
        "lebesgue_std": leb.std,
        "lebesgue_std_quarter_n": short.std,
        "linger_mean": linger.mean,
        "linger_min": linger.exponents.iter().cloned().fold(f64::INFINITY, f64::min),
        "n": s.lyapunov_n,
        "linger_n": s.lyapunov_linger_n,
    });
    rep.tables.push(histogram_table("lyapunov_lebesgue.csv", &leb));
    rep.tables.push(histogram_table("lyapunov_linger.csv", &linger));
    Ok(rep)
}

/// The geometric pressure curve from the configured unstable-leaf pool.
pub fn build_curve(cfg: &RunConfig, g: &KatokMap) -> Result<PressureCurve> {
    let s = &cfg.settings;
    let pool = PoolSpec::UnstableLeaf { offset: 0.0, length: s.curve_pool_length, count: s.curve_pool_count };
    let n_max = *s.curve_n.iter().max().expect("validated non-empty");
    let table = OrbitTable::build(g, pool, n_max, true, &[])?;
    pressure_curve(&table, &uniform_grid(s.t_min, s.t_max, s.t_step), s.curve_delta, &s.curve_n)
}

fn curve_tables(curve: &PressureCurve) -> Vec<Table> {
    let mut t = Table::new("pressure_curve.csv", &["t", "P", "r2", "slope_se"]);
    for (i, &x) in curve.t_grid.iter().enumerate() {
        let d = &curve.diagnostics[i];
        t.push(vec![cell(x), cell(curve.p[i]), cell(d.r2), cell(d.slope_se)]);
    }
    let mut sets = Table::new("separated_sets.csv", &["n", "set_size"]);
    for (n, k) in curve.n_range.iter().zip(&curve.set_sizes) {
        sets.push(vec![n.to_string(), k.to_string()]);
    }
    vec![t, sets]
}

fn curve_checks(rep: &mut Report, curve: &PressureCurve) {
    let ll = frame().log_lambda;
    let p0 = curve.at(0.0).unwrap_or(f64::NAN);
    let p1 = curve.at(1.0).unwrap_or(f64::NAN);
    rep.assert("P(0) within 5% of log lambda", (p0 - ll).abs() <= 0.05 * ll, format!("P(0) = {p0}"));
    rep.assert("P(1) in [-0.05, 0.05]", p1.abs() <= 0.05, format!("P(1) = {p1}"));
    let convex = curve.convexity_defect();
    rep.report("second differences >= -1e-3", convex <= 1e-3, format!("largest violation {convex:e}"));
    let mono = curve.monotonicity_defect();
    rep.report("non-increasing", mono <= 1e-3, format!("largest increase {mono:e}"));
}

fn pressure(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let mut rep = Report::new("pressure-curve");
    let curve = build_curve(cfg, g)?;
    curve_checks(&mut rep, &curve);
    rep.results = json!({
        "delta": curve.delta,
        "n_range": curve.n_range,
        "set_sizes": curve.set_sizes,
        "convexity_defect": curve.convexity_defect(),
        "monotonicity_defect": curve.monotonicity_defect(),
    });
    rep.tables.extend(curve_tables(&curve));
    Ok(rep)
}

fn spectrum_pipeline(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let mut rep = Report::new("spectrum");
    let curve = build_curve(cfg, g)?;
    curve_checks(&mut rep, &curve);
    let table = spectrum(&curve, cfg.settings.alpha_step)?;
    rep.assert("alpha2 < 0", table.alpha2_hat < 0.0, format!("alpha2 = {}", table.alpha2_hat));
    rep.report("alpha2 < -0.01", table.alpha2_hat < -0.01, format!("alpha2 = {}", table.alpha2_hat));
    let e0 = legendre(&curve, 0.0)?;
    rep.assert("E(0) = 0 within 0.05", e0.abs() <= 0.05, format!("E(0) = {e0}"));
    let concave = table.concavity_defect();
    rep.assert("E concave", concave <= 1e-3, format!("largest violation {concave:e}"));
    let mut worst = f64::NEG_INFINITY;
    for (&a, &e) in table.alpha_grid.iter().zip(&table.e) {
        for (&t, &p) in curve.t_grid.iter().zip(&curve.p) {
            worst = worst.max(e + t * a - p);
        }
    }
    rep.assert("E(alpha) + t alpha <= P(t)", worst <= 1e-12, format!("largest excess {worst:e}"));
    let in_range = table.dim_lb.iter().flatten().all(|d| (0.0..=2.0).contains(d));
    rep.assert("dimension bound in [0, 2]", in_range, String::new());
    let (lo, hi) = table.plateau_range();
    let idx = table.indices_in(lo, hi);
    let e_dev = idx.iter().map(|&i| (table.e[i] + table.alpha_grid[i]).abs()).fold(0.0, f64::max);
    let d_dev = idx.iter().filter_map(|&i| table.dim_lb[i]).map(|d| (d - 2.0).abs()).fold(0.0, f64::max);
    rep.report(
        "E = -alpha within 0.02 on the plateau",
        !idx.is_empty() && e_dev <= 0.02,
        format!("max deviation {e_dev}"),
    );
    rep.report(
        "dimension bound 2 within 0.05 on the plateau",
        !idx.is_empty() && d_dev <= 0.05,
        format!("max deviation {d_dev}"),
    );
    let fit = table.plateau_fit();
    rep.results = json!({
        "alpha1_hat": table.alpha1_hat,
        "alpha2_hat": table.alpha2_hat,
        "plateau": { "lo": lo, "hi": hi, "points": idx.len(), "fit": fit },
    });
    let mut t = Table::new("spectrum.csv", &["alpha", "E", "dim_lb"]);
    for (i, &a) in table.alpha_grid.iter().enumerate() {
        t.push(vec![cell(a), cell(table.e[i]), table.dim_lb[i].map(cell).unwrap_or_default()]);
    }
    rep.tables.extend(curve_tables(&curve));
    rep.tables.push(t);
    Ok(rep)
}

fn gibbs_check(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let s = &cfg.settings;
    let mut rep = Report::new("gibbs-check");
    let eps = g.params.epsilon;
    let pool = PoolSpec::Grid { resolution: s.gibbs_resolution };
    let nu = build_nu_n(g, pool, s.gibbs_length, eps, GibbsPotential::Geometric(0.0))?;
    let mu = build_mu_n(g, &nu)?;
    let mass = mu.total_mass();
    rep.assert("total mass 1", (mass - 1.0).abs() <= 1e-12, format!("{mass}"));
    let defect = mu.invariance_defect(g, |x| (std::f64::consts::TAU * x.u).cos())?;
    let bound = 2.0 / s.gibbs_length as f64;
    rep.assert("invariance defect <= 2/N", defect <= bound, format!("{defect:e} against {bound:e}"));
    drop(mu);
    let horizon = *s.gibbs_n.iter().max().expect("validated non-empty");
    let orbits = AtomOrbits::of_mu(g, &nu, horizon, GibbsPotential::Geometric(0.0), GIBBS_SCALE * eps)?;
    let h = frame().log_lambda;
    let d = gibbs_diagnostic(&orbits, &s.gibbs_n, s.gibbs_samples, h, GIBBS_SCALE * eps, cfg.seed)?;
    let last = *d.rho_max.last().expect("non-empty");
    rep.report("max |rho|/n < 0.1 at the largest n", last < 0.1, format!("{last}"));
    rep.report("max |rho|/n decreases", d.sublinear, format!("{:?}", d.rho_max));
    let mut t = Table::new("gibbs.csv", &["n", "sample", "rho", "mass", "censored"]);
    for (k, &n) in d.n_values.iter().enumerate() {
        for (j, r) in d.ratios[k].iter().enumerate() {
            t.push(vec![n.to_string(), j.to_string(), cell(r.rho), cell(r.mass), r.censored.to_string()]);
        }
    }
    rep.results = json!({
        "atoms_nu": nu.len(),
        "measure_length": s.gibbs_length,
        "n_values": d.n_values,
        "rho_max_over_n": d.rho_max,
        "rho_mean": d.rho_mean,
        "censored": d.censored,
        "entropy": h,
    });
    rep.tables.push(t);
    Ok(rep)
}

fn ldp(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let s = &cfg.settings;
    let mut rep = Report::new("ldp");
    let curve = build_curve(cfg, g)?;
    let (s_grid, lambda, mean) = geometric_lambda(&curve, 0.0)?;
    let deltas = uniform_grid(0.0, s.ldp_delta_max, 0.01);
    let rf = rate_function(&s_grid, &lambda, mean, &deltas, "phi_geo")?;
    rep.assert("q(0) = 0", rf.q[0] == 0.0, format!("{}", rf.q[0]));
    rep.assert("q non-decreasing", rf.q.windows(2).all(|w| w[1] >= w[0]), String::new());
    let k = deltas
        .iter()
        .position(|&d| (d - s.ldp_delta).abs() < 1e-9)
        .ok_or_else(|| KatokError::Config("ldp_delta must be a multiple of 0.01 not above ldp_delta_max".into()))?;
    let q_hat = rf.q[k];

    let eps = g.params.epsilon;
    let pool = PoolSpec::UnstableLeaf { offset: 0.0, length: s.ldp_pool_length, count: s.ldp_pool_count };
    let nu = build_nu_n(g, pool, s.ldp_length, eps, GibbsPotential::Geometric(0.0))?;
    let horizon = *s.ldp_n.iter().max().expect("validated non-empty");
    let orbits = AtomOrbits::of_mu(g, &nu, horizon, GibbsPotential::Geometric(0.0), GIBBS_SCALE * eps)?;
    let dec = empirical_deviation_decay(&orbits, |a, n| orbits.geo_sum(a, n), mean, &s.ldp_n, s.ldp_delta)?;
    let ratio = dec.exponent / q_hat;
    rep.report(
        "decay exponent within a factor 2 of q",
        ratio.is_finite() && (0.5..=2.0).contains(&ratio),
        format!("exponent {} against q = {q_hat}", dec.exponent),
    );
    let convex = rf.q.windows(3).map(|w| (-(w[0] - 2.0 * w[1] + w[2])).max(0.0)).fold(0.0, f64::max);
    rep.report("q convex", convex <= 1e-9, format!("largest violation {convex:e}"));
    rep.results = json!({
        "mean": mean,
        "delta": s.ldp_delta,
        "q_hat": q_hat,
        "exponent": dec.exponent,
        "censored_bound": dec.censored_bound,
        "atoms_nu": nu.len(),
        "atoms_mu": orbits.len(),
    });
    let mut qt = Table::new("rate_function.csv", &["delta", "q"]);
    for (d, q) in rf.delta_grid.iter().zip(&rf.q) {
        qt.push(vec![cell(*d), cell(*q)]);
    }
    let mut dt = Table::new("deviation_decay.csv", &["n", "mass", "censored"]);
    for (i, n) in dec.n_grid.iter().enumerate() {
        dt.push(vec![n.to_string(), cell(dec.mass[i]), dec.censored[i].to_string()]);
    }
    rep.tables.extend([qt, dt]);
    Ok(rep)
}

fn decomp_stats(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let s = &cfg.settings;
    let mut rep = Report::new("decomp-stats");
    let c = CollectionParams::new(s.decomp_r, &g.params)?;
    for (name, ok) in g.params.scale_conditions() {
        rep.report(name, ok, String::new());
    }
    let max_n = s.decomp_max_n;
    let rows: Vec<(usize, katoklab::decomposition::DecompTriple, bool)> = par_map(s.decomp_segments, |i| {
        let mut rng = trial_rng(cfg.seed, i as u64);
        // Half the starts lie near the origin so that both symbols occur.
        let x = if i % 2 == 0 {
            let r = 2.0 * c.chi_radius * rng.gen::<f64>();
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            TorusPoint::new(r * a.cos(), r * a.sin())
        } else {
            TorusPoint::new(rng.gen(), rng.gen())
        };
        let n = rng.gen_range(0..=max_n);
        let chis = c.chi_sequence(g, &OrbitSegment { x, n });
        let t = classify_chi(&chis, c.r);
        (n, t, t == classify_chi_scan(&chis, c.r))
    });
    let agree = rows.iter().filter(|r| r.2).count();
    let sums = rows.iter().all(|(n, t, _)| t.p + t.g + t.s == *n);
    rep.assert("agrees with the literal scan", agree == rows.len(), format!("{agree} of {}", rows.len()));
    rep.assert("p + g + s = n", sums, String::new());
    let mut words_ok = true;
    for n in 0..=12usize {
        for w in 0..(1u32 << n) {
            let chis: Vec<u8> = (0..n).map(|i| ((w >> i) & 1) as u8).collect();
            words_ok &= classify_chi(&chis, c.r) == classify_chi_scan(&chis, c.r);
        }
    }
    rep.assert("all words of length <= 12 agree", words_ok, String::new());
    let mut t = Table::new("decomposition.csv", &["n", "segments", "mean_p", "mean_g", "mean_s", "good_fraction"]);
    let mut good_total = 0usize;
    for n in 0..=max_n {
        let sel: Vec<_> = rows.iter().filter(|r| r.0 == n).collect();
        if sel.is_empty() {
            continue;
        }
        let k = sel.len() as f64;
        let mean = |f: fn(&katoklab::decomposition::DecompTriple) -> usize| {
            sel.iter().map(|r| f(&r.1) as f64).sum::<f64>() / k
        };
        let good = sel.iter().filter(|r| r.1.g == n).count();
        good_total += good;
        t.push(vec![
            n.to_string(),
            sel.len().to_string(),
            cell(mean(|d| d.p)),
            cell(mean(|d| d.g)),
            cell(mean(|d| d.s)),
            cell(good as f64 / k),
        ]);
    }
    rep.results = json!({ "r": c.r, "chi_radius": c.chi_radius, "segments": rows.len(), "fully_good": good_total });
    rep.tables.push(t);
    Ok(rep)
}

fn probes(cfg: &RunConfig, g: &KatokMap) -> Result<Report> {
    let s = &cfg.settings;
    let mut rep = Report::new("probes");
    let drift = g.product_drift(s.probe_samples, cfg.seed)?;
    rep.assert("s1 s2 conserved by the time-one flow", drift < 1e-8, format!("max relative drift {drift:e}"));
    let cones = cone_check(g, s.cone_samples, g.params.beta, cfg.seed)?;
    rep.assert("cones invariant at beta", cones.violations == 0, format!("{} violations", cones.violations));
    let fd = derivative_check(g, s.probe_samples, 1e-3, 1e-7, cfg.seed)?;
    rep.assert("derivative matches central differences", fd < 1e-5, format!("max relative error {fd:e}"));
    let mut lt = Table::new("linger.csv", &["rho", "measured", "bound"]);
    let mut linger_ok = true;
    for &rho in &s.linger_rho {
        let l = g.linger_time(rho)?;
        linger_ok &= (l.measured as f64) <= 2.0 * l.bound;
        lt.push(vec![cell(rho), l.measured.to_string(), cell(l.bound)]);
    }
    rep.assert("passage times <= 2 T(rho)", linger_ok, String::new());

    let c = CollectionParams::new(0.3, &g.params)?;
    let scale = 100.0 * g.params.epsilon;
    let bowen =
        bowen_property_probe(g, &sqrt_distance_potential, &c, scale, s.bowen_trials, &s.bowen_n, true, cfg.seed);
    let mut bt = Table::new("bowen.csv", &["n", "variation"]);
    let bowen_json = match &bowen {
        Ok(b) => {
            rep.report(
                "Bowen variation flat in n",
                b.slope.abs() < 1e-4 && !b.slope_significant,
                format!("slope {:e}, t = {}", b.slope, b.slope_t),
            );
            for (n, v) in b.n_values.iter().zip(&b.variation) {
                bt.push(vec![n.to_string(), cell(*v)]);
            }
            json!({ "slope": b.slope, "slope_t": b.slope_t, "max": b.max })
        }
        Err(e) => {
            rep.report("Bowen variation flat in n", false, e.to_string());
            json!(null)
        }
    };
    let mut zt = Table::new("zeta.csv", &["n", "zeta", "zeta_over_n"]);
    let mut prev = f64::INFINITY;
    let mut decreasing = true;
    for n in [8usize, 16, 32, 64] {
        let z = zeta_estimate(g, &sqrt_distance_potential, n, scale, s.zeta_samples, cfg.seed)?;
        decreasing &= z / n as f64 <= prev;
        prev = z / n as f64;
        zt.push(vec![n.to_string(), cell(z), cell(z / n as f64)]);
    }
    rep.report("zeta(n)/n decreases", decreasing, String::new());
    rep.results = json!({
        "product_drift": drift,
        "cone_violations": cones.violations,
        "cone_worst_margin": cones.worst_margin,
        "derivative_error": fd,
        "bowen": bowen_json,
    });
    rep.tables.extend([lt, bt, zt]);
    Ok(rep)
}
