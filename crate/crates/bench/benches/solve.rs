use criterion::{criterion_group, criterion_main, Criterion};
use derham_shape::{laplace_spectrum, maxwell_spectrum, LaplaceSide, SolveOptions};
use derham_shape_bench::mixed_cube;

fn spectra(c: &mut Criterion) {
    let opts = SolveOptions::default();
    let mut group = c.benchmark_group("dense_solve");
    group.sample_size(10);
    let lap = mixed_cube(6);
    group.bench_function("laplace/n=6", |b| {
        b.iter(|| laplace_spectrum(&lap, LaplaceSide::Primal, &opts).unwrap())
    });
    let max = mixed_cube(3);
    group.bench_function("maxwell/n=3", |b| b.iter(|| maxwell_spectrum(&max, &opts).unwrap()));
    group.finish();
}

criterion_group!(benches, spectra);
criterion_main!(benches);
