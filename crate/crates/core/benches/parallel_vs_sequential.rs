use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lmcot::losses::{dual_cot_cos_loss_with, generalized_lmcot_loss_with, AngularLoss};
use lmcot::train::{gradcheck, GradTarget, DEFAULT_H};
use lmcot::{AngularBatch, Execution, LossConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn batch(n: usize, classes: usize) -> AngularBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let theta = Array2::from_shape_simple_fn((n, classes), || rng.random_range(0.2..2.2));
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    AngularBatch::new(theta, labels).expect("valid batch")
}

fn losses(c: &mut Criterion) {
    let cfg =
        LossConfig { m: 0.1, m2: 0.1, sigma1: 0.02, sigma2: 0.02, sigma3: 0.01, beta: 0.5, ..LossConfig::default() };
    for n in [256, 4096] {
        let b = batch(n, 100);
        let mut group = c.benchmark_group(format!("losses/n={n}"));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new("generalized-cot", name), &exec, |bench, &exec| {
                bench.iter(|| generalized_lmcot_loss_with(black_box(&b), &cfg, exec).expect("finite"))
            });
            group.bench_with_input(BenchmarkId::new("dual-cot-cos", name), &exec, |bench, &exec| {
                bench.iter(|| dual_cot_cos_loss_with(black_box(&b), &cfg, exec).expect("finite"))
            });
        }
        group.finish();
    }
}

fn gradchecks(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradcheck");
    group.sample_size(10);
    let target = GradTarget::Angular(AngularLoss::DualCotCos);
    for (name, exec) in MODES {
        group.bench_function(name, |bench| bench.iter(|| gradcheck(target, 64, DEFAULT_H, 0, exec).expect("runs")));
    }
    group.finish();
}

criterion_group!(benches, losses, gradchecks);
criterion_main!(benches);
