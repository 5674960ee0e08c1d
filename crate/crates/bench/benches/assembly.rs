use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use derham_shape::{mass_matrix, stiffness_matrix, DeRhamComplex, WeightMode};
use derham_shape_bench::mixed_cube;
use std::hint::black_box;

fn masses(c: &mut Criterion) {
    let model = mixed_cube(6);
    let mut group = c.benchmark_group("mass_matrix/n=6");
    for q in 0..4 {
        let w = model.coeffs.mass_weight(q).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, &q| {
            b.iter(|| mass_matrix(&model.mesh, q, black_box(&w), WeightMode::Spd).unwrap())
        });
    }
    group.finish();
}

fn stiffness(c: &mut Criterion) {
    let model = mixed_cube(6);
    let w = model.coeffs.mass_weight(2).unwrap();
    c.bench_function("stiffness_matrix/curl/n=6", |b| {
        b.iter(|| stiffness_matrix(&model.mesh, &model.complex, 1, black_box(&w), WeightMode::Spd).unwrap())
    });
    c.bench_function("complex/build/n=6", |b| {
        b.iter(|| DeRhamComplex::build(black_box(&model.mesh), &model.partition))
    });
}

criterion_group!(benches, masses, stiffness);
criterion_main!(benches);
