use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypmark::cantor::relative_measure;
use hypmark::returns::{induced_return_masses, return_tail};
use hypmark::stats::run_trajectory;
use hypmark::symbolic::{enumerate_admissible, variation_family};
use hypmark::thermo::{partition_sum_exact, power_iterate, renewal_spectrum, Potential};
use hypmark::{ModelSpec, Word};
use hypmark_bench::{perturbed, small_caps};
use std::hint::black_box;

fn symbolic(c: &mut Criterion) {
    let mut g = c.benchmark_group("symbolic");
    for len in [6usize, 8] {
        g.bench_with_input(BenchmarkId::new("enumerate", len), &len, |b, &len| {
            b.iter(|| enumerate_admissible(&Word::new(&[1]), black_box(len), Some(16)).unwrap())
        });
    }
    g.bench_function("variation_family_eps005", |b| {
        let spec = perturbed();
        b.iter(|| variation_family(&spec, 4, 4, 3, 8).unwrap())
    });
    g.finish();
}

fn measures(c: &mut Criterion) {
    let spec = ModelSpec::default();
    let mut g = c.benchmark_group("measures");
    g.sample_size(10);
    g.bench_function("relative_measure_depth60", |b| b.iter(|| relative_measure(1, black_box(60), &spec).unwrap()));
    g.bench_function("return_tail_12", |b| b.iter(|| return_tail(black_box(12), &spec).unwrap()));
    g.bench_function("induced_masses_160", |b| {
        b.iter(|| induced_return_masses(&spec, black_box(160), 480).unwrap())
    });
    g.bench_function("tower_z12_exact", |b| b.iter(|| partition_sum_exact(black_box(12), &spec).unwrap()));
    g.finish();
}

fn operators(c: &mut Criterion) {
    let spec = ModelSpec::default();
    let caps = small_caps();
    let mut g = c.benchmark_group("operators");
    g.sample_size(10);
    g.bench_function("power_iterate_small", |b| {
        let pot = Potential::new(spec);
        b.iter(|| power_iterate(&pot, &caps, black_box(50)).unwrap())
    });
    g.bench_function("renewal_spectrum_small", |b| b.iter(|| renewal_spectrum(&spec, &caps, black_box(100)).unwrap()));
    g.finish();
}

fn orbits(c: &mut Criterion) {
    let spec = ModelSpec::default();
    let mut g = c.benchmark_group("orbits");
    g.throughput(criterion::Throughput::Elements(100_000));
    g.bench_function("trajectory_1e5", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            run_trajectory(&spec, 1, 0, 0, 100_000, |v| acc += v.point.x).unwrap();
            black_box(acc)
        })
    });
    g.finish();
}

criterion_group!(benches, symbolic, measures, operators, orbits);
criterion_main!(benches);
