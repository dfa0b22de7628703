use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sledge_core::estimator::{init_estimator, sledge_step, InitOption, Mode, SledgeConfig};
use sledge_core::problems::{
    class_groups, full_grad, full_grad_seq, make_logistic, synthetic_classification, Grouping, LogisticProblem,
    SyntheticClassSpec,
};
use sledge_core::{par, FiniteSumProblem};

fn logistic(classes: usize, per_group: usize) -> LogisticProblem {
    let ds = synthetic_classification(&SyntheticClassSpec {
        classes,
        samples_per_class: 3 * per_group,
        features: 8,
        separation: 1.0,
        noise: 1.0,
        bias: true,
        seed: 1,
    })
    .unwrap();
    let groups = class_groups(&ds, 5, per_group, 1).unwrap();
    make_logistic(Arc::new(ds), 0.01, Grouping::Explicit(groups)).unwrap()
}

fn full_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_gradient");
    for per_group in [4, 20] {
        let p = logistic(26, per_group);
        let x = vec![0.05; p.dim()];
        group.bench_with_input(BenchmarkId::new("parallel", per_group), &p, |b, p| {
            b.iter(|| full_grad(p, black_box(&x)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", per_group), &p, |b, p| {
            b.iter(|| full_grad_seq(p, black_box(&x)))
        });
    }
    group.finish();
}

fn minibatch_map(c: &mut Criterion) {
    let p = logistic(26, 20);
    let x = vec![0.05; p.dim()];
    let batch: Vec<usize> = (0..p.num_components()).step_by(5).collect();
    let mut group = c.benchmark_group("minibatch_gradients");
    group.bench_function("parallel", |b| {
        b.iter(|| par::map_indexed(&batch, |&i| p.component_grad(i, black_box(&x))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_indexed_seq(&batch, |&i| p.component_grad(i, black_box(&x))))
    });
    group.finish();
}

fn estimator_step(c: &mut Criterion) {
    let p = logistic(26, 20);
    let x0 = vec![0.0; p.dim()];
    let config = SledgeConfig { eta: 0.01, b: 12, steps: usize::MAX, r: 0.0, option: InitOption::Full, seed: 0 };
    let mut group = c.benchmark_group("estimator_step");
    for mode in [Mode::Efficient, Mode::Naive] {
        let mut state = init_estimator(&p, &x0, &config, mode).unwrap();
        group.bench_function(format!("{mode:?}").to_lowercase(), |b| {
            b.iter(|| sledge_step(&mut state, &p, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, full_gradient, minibatch_map, estimator_step);
criterion_main!(benches);
