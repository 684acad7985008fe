use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use volmoments::{Engine, Order};
use volmoments_bench::random_cube;

fn engines(c: &mut Criterion) {
    for order in Order::BOTH {
        let mut group = c.benchmark_group(format!("engines_k{order}"));
        group.sample_size(10);
        for n in [32, 64, 128] {
            let volume = random_cube(n);
            group.throughput(Throughput::Bytes(volume.dims().len() as u64));
            for engine in Engine::ALL {
                // The naive engine at 128³ dominates the run without adding information.
                if engine == Engine::Naive && n > 64 {
                    continue;
                }
                group.bench_with_input(BenchmarkId::new(engine.name(), n), &volume, |b, v| {
                    b.iter(|| engine.run(v, order).unwrap())
                });
            }
        }
        group.finish();
    }
}

criterion_group!(benches, engines);
criterion_main!(benches);
