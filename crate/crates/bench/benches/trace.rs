use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ml_locality::trace::{
    gen_stencil_trace, simulate_cache, stack_distances, CacheConfig, CostModel, Layout, LoopOrder,
};
use ml_locality_bench::random_trace;

fn reuse(c: &mut Criterion) {
    let mut g = c.benchmark_group("stack-distances");
    for len in [10_000, 100_000] {
        let t = random_trace(len, 2_000, 1);
        g.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| stack_distances(black_box(&t)).unwrap())
        });
    }
    g.finish();
}

fn cache(c: &mut Criterion) {
    let mut g = c.benchmark_group("lru-simulation");
    let t = random_trace(100_000, 2_000, 2);
    for lines in [64, 512] {
        let config = CacheConfig::new(lines, 4).unwrap();
        g.bench_with_input(BenchmarkId::new("random", lines), &lines, |b, _| {
            b.iter(|| simulate_cache(black_box(&t), &config, CostModel::default()).unwrap())
        });
    }
    let config = CacheConfig::new(64, 4).unwrap();
    for (name, order) in [("stencil-ij", LoopOrder::Ij), ("stencil-ji", LoopOrder::Ji)] {
        let t = gen_stencil_trace(64, 64, order, Layout::ColumnMajor).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| simulate_cache(black_box(&t), &config, CostModel::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, reuse, cache);
criterion_main!(benches);
