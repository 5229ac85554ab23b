use approx::assert_relative_eq;
use katoklab::geometry::{frame, Dynamics, EigenVec2, LinearCat, TorusPoint};
use katoklab::katok::{KatokMap, KatokTilde, SlowProfile};
use katoklab::params::{MapParams, Preset};
use katoklab::torus_dist;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn map() -> KatokMap {
    KatokMap::new(MapParams::preset(Preset::Pressure)).unwrap()
}

fn disc_point(rng: &mut ChaCha8Rng, radius: f64) -> TorusPoint {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    TorusPoint::new(r * a.cos(), r * a.sin())
}

#[test]
fn profile_properties_on_grid() {
    let g = map();
    let p = &g.profile;
    let r0 = g.params.r0;
    let alpha = g.params.alpha;
    let mut prev = (0.0, f64::INFINITY);
    for i in 1..=20_000 {
        let u = r0 * i as f64 / 20_000.0;
        let (v, dv) = p.value_and_slope(u);
        assert!(v >= prev.0 && (v > prev.0 || u > 0.99 * r0), "not increasing at {u}");
        assert!(dv / v <= 2.0 * alpha / u * (1.0 + 1e-12), "log-derivative bound fails at {u}");
        if u > r0 / 2.0 {
            assert!(dv <= prev.1 * (1.0 + 1e-12), "slope increases on the blend at {u}");
        }
        prev = (v, dv);
    }
    for &u in &[r0, 0.3, 1.0] {
        assert_eq!(p.psi(u).unwrap(), 1.0);
    }
}

#[test]
fn slope_of_profile_matches_finite_differences() {
    let g = map();
    let p = &g.profile;
    let r0 = g.params.r0;
    for i in 1..200 {
        let u = r0 * (0.01 + 0.98 * i as f64 / 200.0);
        let h = 1e-7 * r0;
        let fd = (p.value(u + h) - p.value(u - h)) / (2.0 * h);
        let (_, dv) = p.value_and_slope(u);
        assert!((fd - dv).abs() <= 1e-5 * dv.abs().max(1.0 / r0 * 1e-3), "u = {u}: {fd} vs {dv}");
    }
}

#[test]
fn flow_examples() {
    let g = map();
    assert_eq!(g.flow_time_one(&EigenVec2::ZERO).unwrap(), EigenVec2::ZERO);
    // Along the unstable axis outside the slowed disc the flow is exactly linear.
    let s = EigenVec2::new(0.02, 0.0);
    let img = g.flow_time_one(&s).unwrap();
    assert_relative_eq!(img.s1, frame().lambda * 0.02, max_relative = 1e-14);
    assert_eq!(img.s2, 0.0);
}

#[test]
fn flow_conserves_product() {
    let g = map();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r1 = g.params.r1;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = r1 * rng.gen::<f64>().sqrt();
        let a = rng.gen::<f64>() * std::f64::consts::TAU;
        let s = EigenVec2::new(r * a.cos(), r * a.sin());
        let img = g.flow_time_one(&s).unwrap();
        let p0 = s.s1 * s.s2;
        worst = worst.max(((img.s1 * img.s2) - p0).abs() / p0.abs());
        assert!(img.s1.abs() >= s.s1.abs() && img.s2.abs() <= s.s2.abs());
    }
    assert!(worst < 1e-8, "worst relative drift {worst:e}");
}

#[test]
fn apply_examples_and_round_trip() {
    let g = map();
    assert_eq!(g.apply(&TorusPoint::ORIGIN), TorusPoint::ORIGIN);
    let y = g.apply(&TorusPoint::new(0.5, 0.5));
    assert!(torus_dist(&y, &TorusPoint::new(0.5, 0.0)) < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let x =
            if i % 2 == 0 { disc_point(&mut rng, 1.2 * g.params.r1) } else { TorusPoint::new(rng.gen(), rng.gen()) };
        worst = worst.max(torus_dist(&g.apply_inv(&g.apply(&x)), &x));
        worst = worst.max(torus_dist(&g.apply(&g.apply_inv(&x)), &x));
    }
    assert!(worst < 1e-9, "round trip error {worst:e}");
}

#[test]
fn outside_switch_disc_g_is_linear() {
    let g = map();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let x = TorusPoint::new(rng.gen(), rng.gen());
        if x.norm_from_origin() > g.params.r1 {
            assert_eq!(g.apply(&x), LinearCat::map(&x));
            assert_eq!(g.jacobian(&x), frame().a);
        }
    }
}

#[test]
fn kappa_examples() {
    let g = map();
    let r0 = g.params.r0;
    assert_eq!(g.kappa(&TorusPoint::new(0.2, 0.0)), 1.0);
    assert_eq!(g.kappa(&TorusPoint::new(r0.sqrt() * 1.0001, 0.0)), 1.0);
    for &r2 in &[1e-10f64, 1e-7, 4e-5] {
        let x = TorusPoint::new(r2.sqrt(), 0.0);
        assert_relative_eq!(g.kappa(&x), (r0 / r2).powf(0.1), max_relative = 1e-12);
    }
}

#[test]
fn kappa_normalizer_matches_riemann_sum() {
    // Independent oracle: midpoint rule on a 4096^2 grid over the torus.
    let p = SlowProfile::new(0.1, 0.01, 1e-12).unwrap();
    let n = 4096usize;
    let h = 1.0 / n as f64;
    let mut total = 0.0f64;
    for i in 0..n {
        let x = -0.5 + (i as f64 + 0.5) * h;
        let mut row = 0.0;
        for j in 0..n {
            let y = -0.5 + (j as f64 + 0.5) * h;
            row += p.kappa_at(x * x + y * y);
        }
        total += row;
    }
    let riemann = total * h * h;
    assert_relative_eq!(p.kappa0(), riemann, max_relative = 1e-4);
}

#[test]
fn phi_examples() {
    let g = map();
    let p = &g.profile;
    let r0 = g.params.r0;
    let far = TorusPoint::new(0.3, 0.1);
    assert_eq!(g.phi(&far), far);
    let edge = TorusPoint::new(r0.sqrt(), 0.0);
    assert_eq!(g.phi(&edge), edge);
    for &r in &[1e-6f64, 1e-4, 3e-3, 7e-3] {
        if r * r > r0 / 2.0 {
            continue;
        }
        let closed = (r0.powf(0.1) * r.powf(2.0 * 0.9) / 0.9 / p.c0()).sqrt();
        assert_relative_eq!(p.radial_map(r), closed, max_relative = 1e-12);
        let img = g.phi(&TorusPoint::new(r, 0.0));
        assert_relative_eq!(img.u, closed, max_relative = 1e-12);
    }
    let mut prev = 0.0;
    for i in 1..=10_000 {
        let r = r0.sqrt() * i as f64 / 10_000.0;
        let big = p.radial_map(r);
        assert!(big > prev);
        prev = big;
    }
    assert_relative_eq!(prev, r0.sqrt(), max_relative = 1e-12);
}

#[test]
fn phi_round_trip() {
    let g = map();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let x = disc_point(&mut rng, 1.5 * g.params.r0.sqrt());
        assert!(torus_dist(&g.phi_inv(&g.phi(&x)), &x) < 1e-9);
        assert!(torus_dist(&g.phi(&g.phi_inv(&x)), &x) < 1e-9);
    }
}

#[test]
fn gtilde_examples() {
    let g = map();
    let gt = KatokTilde(&g);
    assert_eq!(gt.apply(&TorusPoint::ORIGIN), TorusPoint::ORIGIN);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 1000 {
        let x = TorusPoint::new(rng.gen(), rng.gen());
        let ax = LinearCat::map(&x);
        if x.norm_from_origin() > g.params.r1 && ax.norm_from_origin() > g.params.slow_radius() {
            assert_eq!(gt.apply(&x), ax);
            checked += 1;
        }
    }
    for i in 0..10_000 {
        let x = if i % 2 == 0 { disc_point(&mut rng, g.params.r1) } else { TorusPoint::new(rng.gen(), rng.gen()) };
        let lhs = g.phi(&g.apply(&x));
        let rhs = gt.apply(&g.phi(&x));
        assert!(torus_dist(&lhs, &rhs) < 1e-12);
    }
}

#[test]
fn jacobian_determinant_matches_density_ratio() {
    let g = map();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let x = disc_point(&mut rng, g.params.r1);
        if x.norm_from_origin() < 1e-3 {
            continue;
        }
        let det = g.jacobian(&x).determinant();
        let ratio = g.kappa(&x) / g.kappa(&g.apply(&x));
        assert_relative_eq!(det, ratio, max_relative = 1e-5);
    }
}

#[test]
fn linger_examples() {
    let g = map();
    let r1 = g.params.r1;
    let corner = g.linger_time(0.99 * r1 * r1 / 4.0).unwrap();
    assert!(corner.measured < 10, "corner passage {}", corner.measured);
    let mut prev = 0;
    for k in 1..8 {
        let rho = r1 * r1 / 4.0 * 10f64.powi(-k);
        let t = g.linger_time(rho).unwrap();
        assert!(t.measured > prev, "passage not increasing at rho = {rho:e}");
        assert!((t.measured as f64) <= 2.0 * t.bound);
        prev = t.measured;
    }
    assert!(g.passage_steps(EigenVec2::new(0.0, r1), 100).is_err());
}
