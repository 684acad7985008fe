use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use volmoments::ops::NoCount;
use volmoments::projection::project_set;
use volmoments::{assemble_2d, integrals, Order};
use volmoments_bench::random_cube;

fn stages(c: &mut Criterion) {
    let mut group = c.benchmark_group("dpm_stages");
    group.sample_size(20);
    for n in [64, 128, 256] {
        let volume = random_cube(n);
        group.throughput(Throughput::Bytes(volume.dims().len() as u64));
        for order in Order::BOTH {
            let anti = order == Order::Fourth;
            group.bench_with_input(
                BenchmarkId::new(format!("project_k{order}"), n),
                &volume,
                |b, v| b.iter(|| project_set(v, anti, 1, &mut NoCount)),
            );
        }
        let set = project_set(&volume, true, 1, &mut NoCount);
        group.bench_with_input(BenchmarkId::new("integrals", n), &set, |b, s| {
            b.iter(|| s.images().map(integrals).collect::<Vec<_>>())
        });
        let isets: Vec<_> = set.images().map(integrals).collect();
        group.bench_with_input(BenchmarkId::new("assemble_2d", n), &isets, |b, sets| {
            b.iter(|| {
                sets.iter()
                    .map(|i| assemble_2d(i).unwrap())
                    .collect::<Vec<_>>()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
