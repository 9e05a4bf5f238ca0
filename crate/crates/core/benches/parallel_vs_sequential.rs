//! Pool versus single-thread timings for the Monte Carlo heavy paths.
//!
//! `cargo bench -p hhl-core` compares a rayon pool against one worker.
//! Building with `--no-default-features` drops rayon altogether; both rows
//! then run the sequential fallback and should match.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hhl_core::norms::morrey_norm;
use hhl_core::par;
use hhl_core::weights::{ap_probe, default_ball_family};
use hhl_core::{GroupPoint, HeisDim, McConfig, RadiusGrid, ScalarField, WeightSpec};

fn threads() -> Vec<usize> {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut t = vec![1, avail.max(2)];
    t.dedup();
    t
}

fn morrey_mc(c: &mut Criterion) {
    let f = ScalarField::general(|p: &GroupPoint| (1.0 + p[0] * p[0] + p[2].abs()).ln());
    let w = WeightSpec::power(HeisDim::h1(), -1.0).unwrap();
    let grid = RadiusGrid::dyadic(-4, 4);
    let cfg = McConfig::new(7, 1 << 14, 32).unwrap();
    let mut g = c.benchmark_group("morrey_norm_mc");
    g.sample_size(10);
    for t in threads() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || morrey_norm(&f, 2.0, -0.2, &w, &grid, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn ap_family(c: &mut Criterion) {
    let w = WeightSpec::power(HeisDim::h1(), -2.0).unwrap();
    let family = default_ball_family(1);
    let cfg = McConfig::new(7, 1 << 12, 16).unwrap();
    let mut g = c.benchmark_group("ap_probe");
    g.sample_size(10);
    for t in threads() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(Some(t), || ap_probe(&w, 2.0, &family, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, morrey_mc, ap_family);
criterion_main!(benches);
