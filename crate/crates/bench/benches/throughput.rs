//! Throughput benchmarks for the hot paths: the plug-in estimators, the
//! network gradient and curvature kernels, and the full solver loop.
//!
//! Inputs are drawn once per benchmark from fixed seeds, so timings are
//! comparable across runs and machines.

use std::hint::black_box;

use bsgd::problems::maml::{MamlProblem, MamlSpec};
use bsgd::problems::quadratic::{OuterKind, OuterLaw, QuadraticProblem, QuadraticSpec};
use bsgd::rng::seeded_rng;
use bsgd::{
    bsgd_run, estimate_gradient, estimate_value, BatchSchedule, CsoProblem, Domain, Mlp,
    OutputPolicy, RunConfig, StepSchedule,
};
use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2};

fn quadratic(dim: usize) -> QuadraticProblem {
    QuadraticProblem::new(QuadraticSpec {
        dim,
        sigma_inner: 1.0,
        shift: OuterLaw::Normal { mean: 0.0, std: 1.0 },
        kind: OuterKind::Squared,
        domain_radius: None,
    })
}

fn estimators(c: &mut Criterion) {
    let problem = quadratic(32);
    let mut rng = seeded_rng(1);
    let x = Array1::from_elem(32, 0.3);
    let outer = problem.sample_outer(&mut rng);
    let batch = problem.sample_inner(&outer, 64, &mut rng);
    c.bench_function("estimate_value quadratic d=32 m=64", |b| {
        b.iter(|| estimate_value(&problem, black_box(&x), &outer, &batch).unwrap())
    });
    c.bench_function("estimate_gradient quadratic d=32 m=64", |b| {
        b.iter(|| estimate_gradient(&problem, black_box(&x), &outer, &batch).unwrap())
    });

    // The second-order path: one gradient here backpropagates through the
    // adaptation step, so it costs a support gradient, a query gradient,
    // and a Hessian-vector product.
    let meta = MamlProblem::new(MamlSpec::default());
    let mut rng = seeded_rng(2);
    let w = meta.net().weights().clone();
    let task = meta.sample_outer(&mut rng);
    let support = meta.sample_inner(&task, 10, &mut rng);
    c.bench_function("estimate_gradient maml 1x40x40x1 m=10", |b| {
        b.iter(|| estimate_gradient(&meta, black_box(&w), &task, &support).unwrap())
    });
}

fn network_kernels(c: &mut Criterion) {
    let net = Mlp::seeded_init(vec![1, 40, 40, 1], 5).unwrap();
    let w = net.weights().clone();
    let n = 64;
    let xs =
        Array2::from_shape_fn((n, 1), |(i, _)| -5.0 + 10.0 * i as f64 / (n as f64 - 1.0));
    let ys = xs.mapv(f64::sin);
    let v = Array1::from_elem(w.len(), 0.1);
    c.bench_function("mlp loss_grad 1x40x40x1 n=64", |b| {
        b.iter(|| net.loss_grad_with(black_box(&w), &xs, &ys).unwrap())
    });
    c.bench_function("mlp hvp 1x40x40x1 n=64", |b| {
        b.iter(|| net.hvp_with(black_box(&w), &xs, &ys, &v).unwrap())
    });
}

fn solver_loop(c: &mut Criterion) {
    let problem = quadratic(8);
    let cfg = RunConfig {
        iters: 256,
        step: StepSchedule::InverseSqrt { c: 0.1 },
        batch: BatchSchedule::Fixed(8),
        domain: Domain::origin_ball(8, 10.0),
        x1: Array1::zeros(8),
        output: OutputPolicy::Average,
        seed: 9,
        trace_every: 0,
        outer_batch: 1,
    };
    c.bench_function("bsgd_run quadratic d=8 T=256 m=8", |b| {
        b.iter(|| bsgd_run(&problem, black_box(&cfg)).unwrap())
    });
}

criterion_group!(benches, estimators, network_kernels, solver_loop);
criterion_main!(benches);
