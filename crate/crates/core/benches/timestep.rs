//! One simulation step of multi-ribbon scenes on the rayon pool against a
//! single worker. Build with `--no-default-features` to time the purely
//! sequential code path.

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use ribbon_core::parallel::is_parallel;
use ribbon_core::presets::preset;

fn timestep(c: &mut Criterion) {
    let mut group = c.benchmark_group("timestep");
    group.sample_size(10);
    for name in ["double-chain", "rotate"] {
        let scene = preset(name).unwrap();
        let mut warm = scene.build().unwrap();
        warm.step().unwrap();
        let workers: &[(&str, Option<usize>)] =
            if is_parallel() { &[("pool", None), ("one-thread", Some(1))] } else { &[("sequential", None)] };
        for &(label, threads) in workers {
            group.bench_with_input(BenchmarkId::new(label, name), &threads, |b, &threads| {
                b.iter_batched(
                    || {
                        let mut sim = warm.clone();
                        sim.threads = threads;
                        sim
                    },
                    |mut sim| sim.step().unwrap(),
                    BatchSize::LargeInput,
                )
            });
        }
    }
    group.finish();
}

criterion_group!(benches, timestep);
criterion_main!(benches);
