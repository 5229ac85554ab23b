use katoklab::geometry::{frame, TorusPoint};
use katoklab::gibbs::{
    build_mu_n, build_nu_n, empirical_deviation_decay, gibbs_diagnostic, gibbs_ratio, rate_function, AtomOrbits,
    GibbsPotential, MeasureKind,
};
use katoklab::katok::KatokMap;
use katoklab::params::{MapParams, Preset};
use katoklab::pressure::{build_separated_set, partition_sum, OrbitTable, PoolSpec};

fn map() -> KatokMap {
    KatokMap::new(MapParams::preset(Preset::Pressure)).unwrap()
}

#[test]
fn zero_potential_gives_uniform_weights() {
    let g = map();
    let nu =
        build_nu_n(&g, PoolSpec::Grid { resolution: 48 }, 3, g.params.epsilon, GibbsPotential::Geometric(0.0)).unwrap();
    assert_eq!(nu.kind, MeasureKind::Nu);
    let w = 1.0 / nu.len() as f64;
    assert!(nu.atoms.iter().all(|a| (a.1 - w).abs() < 1e-15));
    assert!((nu.total_mass() - 1.0).abs() < 1e-12);
    assert!((nu.log_partition - (nu.len() as f64).ln()).abs() < 1e-12);
    let mu = build_mu_n(&g, &nu).unwrap();
    assert_eq!(mu.len(), 3 * nu.len());
    assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    assert!(build_mu_n(&g, &mu).is_err());
}

#[test]
fn weights_reproduce_partition_sums() {
    let g = map();
    let t = 0.5;
    let n = 4;
    let pool = PoolSpec::Grid { resolution: 40 };
    let nu = build_nu_n(&g, pool.clone(), n, g.params.epsilon, GibbsPotential::Geometric(t)).unwrap();
    let table = OrbitTable::build(&g, pool, n, true, &[]).unwrap();
    let sums: Vec<f64> = (0..table.len()).map(|i| t * table.geo_sum(i, n).unwrap()).collect();
    let set = build_separated_set(&table, n, 5.0 * g.params.epsilon, Some(&sums), None).unwrap();
    let rec = partition_sum(&set, "geo", |i| sums[i]);
    assert_eq!(set.len(), nu.len());
    assert_eq!(rec.log_sum, nu.log_partition);
    for (k, &i) in set.indices.iter().enumerate() {
        assert_eq!(nu.atoms[k].1, (sums[i as usize] - rec.log_sum).exp());
    }
    assert!((nu.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn orbit_average_is_nearly_invariant() {
    let g = map();
    let f = |x: &TorusPoint| (std::f64::consts::TAU * x.u).cos();
    for &n in &[16, 32, 64] {
        let nu = build_nu_n(&g, PoolSpec::Grid { resolution: 24 }, n, g.params.epsilon, GibbsPotential::Geometric(0.0))
            .unwrap();
        let mu = build_mu_n(&g, &nu).unwrap();
        let defect = mu.invariance_defect(&g, f).unwrap();
        assert!(defect <= 2.0 / n as f64, "n={n}: {defect}");
    }
}

#[test]
fn single_step_gibbs_ratio_is_bounded() {
    let g = map();
    let eps = g.params.epsilon;
    let nu = build_nu_n(&g, PoolSpec::Grid { resolution: 32 }, 16, eps, GibbsPotential::Geometric(0.0)).unwrap();
    let orbits = AtomOrbits::of_mu(&g, &nu, 4, GibbsPotential::Geometric(0.0), 6.0 * eps).unwrap();
    let h = frame().log_lambda;
    let rep = gibbs_diagnostic(&orbits, &[1], 100, h, 6.0 * eps, 3).unwrap();
    assert_eq!(rep.censored[0], 0);
    // mu(B(x, 6 eps)) is comparable to the area of the ball.
    let area = std::f64::consts::PI * (6.0 * eps).powi(2);
    for r in &rep.ratios[0] {
        assert!((r.rho - (area.ln() + h)).abs() < 3.0, "rho {}", r.rho);
    }
}

#[test]
fn empty_balls_are_censored() {
    let g = map();
    let eps = g.params.epsilon;
    let nu = build_nu_n(&g, PoolSpec::Grid { resolution: 4 }, 2, eps, GibbsPotential::Geometric(0.0)).unwrap();
    let orbits = AtomOrbits::of_measure(&g, &nu, 2, GibbsPotential::Geometric(0.0), 0.05).unwrap();
    // Cell centres of the 4x4 grid sit at odd multiples of 1/8; (0.001, 0.001) is far from all.
    let far = [[0.001f32, 0.001], [0.003, 0.002]];
    let r = gibbs_ratio(&orbits, &far, 2, 0.0, 1.0, 0.05).unwrap();
    assert!(r.censored);
    assert_eq!(r.mass, 0.0);
    assert!((r.rho - (2.0 - (orbits.len() as f64).ln())).abs() < 1e-12);
    let own = orbits.orbit(0, 2);
    let r = gibbs_ratio(&orbits, &own, 2, 0.0, 1.0, 0.05).unwrap();
    assert!(!r.censored && r.mass >= orbits.weight(0));
    assert!(orbits.ball_mass(&own, 2, 0.5).is_err());
    assert!(orbits.ball_mass(&own, 3, 0.05).is_err());
}

/// Brute-force rate function: the infimum of the one-sided transforms over all
/// displacements `a` with `|a - mean| >= delta` on a fine grid.
fn brute_force_rate(s: &[f64], l: &[f64], mean: f64, delta: f64, dmax: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let transform = |a: f64, up: bool| {
        s.iter()
            .zip(l)
            .filter(|(&si, _)| if up { si >= 0.0 } else { si <= 0.0 })
            .map(|(&si, &li)| si * a - li)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = f64::INFINITY;
    let steps = 4000;
    for k in 0..=steps {
        let d = delta + (dmax - delta) * k as f64 / steps as f64;
        best = best.min(transform(mean + d, true)).min(transform(mean - d, false));
    }
    best.max(0.0)
}

#[test]
fn rate_function_matches_brute_force_on_the_piecewise_linear_curve() {
    let s: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.05).collect();
    let l: Vec<f64> = s.iter().map(|&x| (1.0f64 - x).max(0.0) - 1.0).collect();
    let mean = -1.0;
    let deltas: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let rf = rate_function(&s, &l, mean, &deltas, "toy").unwrap();
    assert_eq!(rf.q[0], 0.0);
    assert!(rf.q.windows(2).all(|w| w[1] >= w[0]));
    for (k, &d) in deltas.iter().enumerate() {
        // Displacements in the oracle run over the same span as the grid.
        let oracle = brute_force_rate(&s, &l, mean, d, 1.0);
        let coarse = rate_function(&s, &l, mean, &deltas[k..], "toy").unwrap().q[0];
        assert!((coarse - rf.q[k]).abs() < 1e-10);
        assert!((rf.q[k] - oracle).abs() < 1e-10, "delta {d}: {} vs {oracle}", rf.q[k]);
    }
    // Upward displacements cost delta (the kink at s = 1); downward ones are capped by the grid.
    assert!((rf.q[2] - 0.1).abs() < 1e-12);
    for w in rf.q.windows(3) {
        assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-12);
    }
    assert!(rate_function(&s, &l[1..], mean, &deltas, "bad").is_err());
    assert!(rate_function(&s, &l, mean, &[0.2, 0.1], "bad").is_err());
}

#[test]
fn deviation_decay_examples() {
    let g = map();
    let eps = g.params.epsilon;
    let nu = build_nu_n(&g, PoolSpec::Grid { resolution: 96 }, 4, eps, GibbsPotential::Geometric(0.0)).unwrap();
    let orbits = AtomOrbits::of_mu(&g, &nu, 8, GibbsPotential::Geometric(0.0), 6.0 * eps).unwrap();
    let cos_sum = |a: usize, n: usize| {
        (0..n).map(|k| (std::f64::consts::TAU * orbits.position(a, k)[0] as f64).cos()).sum::<f64>()
    };
    let mean = (0..orbits.len()).map(|a| orbits.weight(a) * cos_sum(a, 1)).sum::<f64>();
    let ns = [2, 4, 6, 8];
    let mut prev: Option<katoklab::gibbs::DeviationDecay> = None;
    for &d in &[0.1, 0.2, 0.3] {
        let dec = empirical_deviation_decay(&orbits, cos_sum, mean, &ns, d).unwrap();
        assert!(dec.exponent > 0.0);
        if let Some(p) = prev {
            assert!(dec.exponent > p.exponent, "delta {d}: {} after {}", dec.exponent, p.exponent);
            assert!(dec.mass.iter().zip(&p.mass).all(|(a, b)| a <= b));
        }
        prev = Some(dec);
    }
    let full = empirical_deviation_decay(&orbits, cos_sum, mean, &ns, 1e-13).unwrap();
    assert!(full.mass.iter().all(|&m| m > 0.99));
    assert!(full.exponent.abs() < 0.01);
    assert!(empirical_deviation_decay(&orbits, cos_sum, mean, &[9], 0.1).is_err());
}
