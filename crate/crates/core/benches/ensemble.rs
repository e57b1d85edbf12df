//! Sequential loop against the worker-pool ensemble on the same replicates.
//!
//! `cargo bench` times both with the default `parallel` feature; with
//! `--no-default-features` the "pool" rows run the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use epigrow::ensemble::{map_replicates, run_replicate};
use epigrow::model::ModelParams;
use epigrow::ssa::SimConfig;

fn template(n0: u64) -> SimConfig {
    let p = ModelParams::sir(1.0, 0.5, 3.0, 1.0, n0).unwrap();
    SimConfig::single_infective(p, 4.0).with_seed(1)
}

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    let replicates = 64;
    for n0 in [1_000u64, 10_000] {
        let sim = template(n0);
        group.throughput(Throughput::Elements(replicates));
        group.bench_with_input(BenchmarkId::new("sequential", n0), &sim, |b, sim| {
            b.iter(|| {
                let events: u64 = (0..replicates)
                    .map(|k| run_replicate(sim, k).unwrap().0.event_count)
                    .sum();
                black_box(events)
            })
        });
        group.bench_with_input(BenchmarkId::new("pool", n0), &sim, |b, sim| {
            b.iter(|| {
                let counts = map_replicates(replicates, None, |k| {
                    Ok(run_replicate(sim, k)?.0.event_count)
                })
                .unwrap();
                black_box(counts.iter().sum::<u64>())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
