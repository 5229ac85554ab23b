use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use katoklab::decomposition::classify_chi;
use katoklab::pressure::{build_separated_set, uniform_grid, OrbitTable, PoolSpec, PressureCurve};
use katoklab::spectrum::spectrum;
use katoklab::OrbitCursor;
use katoklab_bench::{default_map, sample_points};
use nalgebra::Vector2;
use std::hint::black_box;

fn map_steps(c: &mut Criterion) {
    let g = default_map();
    let points = sample_points(&g, 256);
    c.bench_function("map step, 256 points", |b| {
        b.iter(|| {
            for x in &points {
                black_box(g.try_apply(black_box(x)).unwrap());
            }
        })
    });
    c.bench_function("tangent step, 256 points", |b| {
        let v = Vector2::new(1.0, 0.0);
        b.iter(|| {
            for x in &points {
                black_box(g.try_step_tangent(black_box(x), &v).unwrap());
            }
        })
    });
    c.bench_function("orbit cursor, 1000 steps", |b| {
        b.iter(|| {
            let mut cur = OrbitCursor::at(points[1]);
            for _ in 0..1000 {
                cur = cur.step(&g).unwrap();
            }
            black_box(cur)
        })
    });
}

fn separated_sets(c: &mut Criterion) {
    let g = default_map();
    let pool = PoolSpec::UnstableLeaf { offset: 0.0, length: 0.01, count: 20_000 };
    let table = OrbitTable::build(&g, pool.clone(), 8, true, &[]).unwrap();
    let mut group = c.benchmark_group("pressure");
    group.sample_size(10);
    group.bench_function("orbit table, 20000 starts, n = 8", |b| {
        b.iter(|| black_box(OrbitTable::build(&g, pool.clone(), 8, true, &[]).unwrap()))
    });
    group.bench_function("separated set, n = 8", |b| {
        b.iter(|| black_box(build_separated_set(&table, 8, 1.0 / 16.0, None, None).unwrap()))
    });
    group.finish();
}

fn transforms(c: &mut Criterion) {
    let t = uniform_grid(-8.0, 2.0, 0.25);
    let p: Vec<f64> = t.iter().map(|&s| (0.96 * (1.0 - s)).max(0.0)).collect();
    let curve = PressureCurve::from_samples(t, p);
    c.bench_function("Legendre spectrum, step 0.01", |b| b.iter(|| black_box(spectrum(&curve, 0.01).unwrap())));
    let words: Vec<Vec<u8>> = (0..256u32)
        .map(|w| (0..64).map(|i| ((w.wrapping_mul(2_654_435_761) >> (i % 32)) & 1) as u8).collect())
        .collect();
    c.bench_function("classify 256 words of length 64", |b| {
        b.iter_batched(
            || words.clone(),
            |ws| ws.iter().map(|w| classify_chi(w, 0.3).g).sum::<usize>(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, map_steps, separated_sets, transforms);
criterion_main!(benches);
