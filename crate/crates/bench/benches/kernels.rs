use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ml_locality::data::ShuffleMode;
use ml_locality::instance::{joint_classify, knn_classify, prw_classify_batched, KernelSpec};
use ml_locality::linear::{LinearObjective, LossKind};
use ml_locality::nn::{gemm_blocked, gemm_naive, Matrix};
use ml_locality::optim::{train_swsgd, OptimizerConfig, UpdateRule};
use ml_locality_bench::blobs;

fn gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gemm");
    for n in [64, 128, 256] {
        let a = Matrix::random(n, n, 1);
        let b = Matrix::random(n, n, 2);
        g.bench_with_input(BenchmarkId::new("naive", n), &n, |bch, _| {
            bch.iter(|| gemm_naive(black_box(&a), black_box(&b)).unwrap())
        });
        for tile in [16, 32, 64] {
            g.bench_with_input(BenchmarkId::new(format!("blocked-{tile}"), n), &n, |bch, _| {
                bch.iter(|| gemm_blocked(black_box(&a), black_box(&b), tile).unwrap())
            });
        }
    }
    g.finish();
}

fn instance(c: &mut Criterion) {
    let rt = blobs(700, 3, 20, 2.0, 1);
    let p = blobs(70, 3, 20, 2.0, 2);
    let kernel = KernelSpec::gaussian(1.0).unwrap();
    let mut g = c.benchmark_group("knn-prw");
    g.sample_size(20);
    for qb in [1, 16, 64] {
        g.bench_with_input(BenchmarkId::new("separate", qb), &qb, |b, &qb| {
            b.iter(|| {
                knn_classify(&rt, &p, 5, qb).unwrap();
                prw_classify_batched(&rt, &p, &kernel, qb).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("joint", qb), &qb, |b, &qb| {
            b.iter(|| joint_classify(&rt, &p, 5, &kernel, qb).unwrap())
        });
    }
    g.finish();
}

fn swsgd(c: &mut Criterion) {
    let data = blobs(500, 2, 20, 0.5, 3);
    let objective = LinearObjective {
        loss: LossKind::Logistic,
        bias: false,
    };
    let mut g = c.benchmark_group("swsgd-epoch");
    g.sample_size(20);
    for window in [0, 1, 2, 4] {
        let config = OptimizerConfig {
            batch_size: 16,
            epochs: 1,
            step_size: 0.05,
            rule: UpdateRule::Vanilla,
            weight_decay: 0.0,
            window_batches: window,
            shuffle: ShuffleMode::PerEpochShuffle,
            seed: 4,
        };
        g.bench_with_input(BenchmarkId::from_parameter(window), &window, |b, _| {
            b.iter(|| train_swsgd(vec![0.0; 20], &objective, &data, &config).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, gemm, instance, swsgd);
criterion_main!(benches);
