//! Data-parallel kernels: rayon pool vs a single-thread pool.
//!
//! The `parallel` feature only parallelizes across independent output
//! elements, so both configurations compute bit-identical results; the
//! bench quantifies the speedup of the two hot kernels (spectral
//! synthesis on the oversampled grid and the pointwise curvature map).

use criterion::{criterion_group, criterion_main, Criterion};
use fraclab::functionals;
use fraclab::geometry::{Geometry, SpectralField};
use fraclab::rng;
use std::hint::black_box;

fn bench_kernels(c: &mut Criterion) {
    let geom = Geometry::sphere(2, 32, 0.5).unwrap();
    let mut r = rng::stream(3, geom.id());
    let u = rng::random_positive_field(&geom, &mut r, 0.3).unwrap();
    let coeffs = u.coeffs().to_vec();

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();

    let mut group = c.benchmark_group("synthesize_over_sphere32");
    group.bench_function("rayon_default", |b| {
        b.iter(|| black_box(geom.synthesize_over(black_box(&coeffs))))
    });
    group.bench_function("single_thread", |b| {
        b.iter(|| single.install(|| black_box(geom.synthesize_over(black_box(&coeffs)))))
    });
    group.finish();

    let mut group = c.benchmark_group("curvature_sphere32");
    group.bench_function("rayon_default", |b| {
        b.iter(|| black_box(functionals::curvature_r(&geom, black_box(&u)).unwrap()))
    });
    group.bench_function("single_thread", |b| {
        b.iter(|| {
            single.install(|| black_box(functionals::curvature_r(&geom, black_box(&u)).unwrap()))
        })
    });
    group.finish();

    // The constant field exercises the same code path with trivial data;
    // useful as a lower bound on transform overhead.
    let one = SpectralField::constant(&geom, 1.0);
    c.bench_function("curvature_constant_sphere32", |b| {
        b.iter(|| black_box(functionals::curvature_r(&geom, black_box(&one)).unwrap()))
    });
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
