//! End-to-end synthesis benchmarks: full method runs on small ground-state
//! targets, sized so one sample stays under a second.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use mps_sso::experiment::{synthesize_method, Method};
use mps_sso::hamiltonian::{target_mps, HamiltonianSpec};
use mps_sso::{Mps, SsoConfig, TnoConfig};

fn bench_methods(c: &mut Criterion) {
    let spec = HamiltonianSpec::ising(8, 0.5);
    let target = target_mps(&spec, 4, 0.0).unwrap().mps;
    let base = SsoConfig {
        layers: 2,
        max_iter: 40,
        restarts: 1,
        seed: 7,
        ..SsoConfig::default()
    };
    let tno = TnoConfig { max_iter: 15, sweeps: 1, ..TnoConfig::default() };

    let mut group = c.benchmark_group("synthesize_ising_n8_chi4_L2");
    group.sample_size(10);
    for method in [Method::Mpd, Method::Sso, Method::MpdLw] {
        group.bench_function(BenchmarkId::from_parameter(method), |b| {
            b.iter(|| {
                synthesize_method(black_box(&target), method, &base, &tno).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_ground_state(c: &mut Criterion) {
    let mut group = c.benchmark_group("ground_state");
    group.sample_size(10);
    for &n in &[8usize, 10] {
        let spec = HamiltonianSpec::ising(n, 0.5);
        group.bench_function(BenchmarkId::new("ising_dense", n), |b| {
            b.iter(|| target_mps(black_box(&spec), 8, 0.0).unwrap())
        });
    }
    let spec = HamiltonianSpec::ising(12, 0.5);
    group.bench_function(BenchmarkId::new("ising_lanczos", 12), |b| {
        b.iter(|| target_mps(black_box(&spec), 8, 0.0).unwrap())
    });
    group.finish();
}

fn bench_mpd_depth(c: &mut Criterion) {
    let target = Mps::random(10, 16, 41, false).unwrap();
    let tno = TnoConfig::default();
    let mut group = c.benchmark_group("mpd_random_n10_chi16");
    group.sample_size(10);
    for &layers in &[1usize, 3, 5] {
        let base = SsoConfig { layers, restarts: 1, ..SsoConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(layers), |b| {
            b.iter(|| {
                synthesize_method(black_box(&target), Method::Mpd, &base, &tno).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_methods, bench_ground_state, bench_mpd_depth);
criterion_main!(benches);
