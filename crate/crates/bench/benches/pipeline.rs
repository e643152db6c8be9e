use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use optoferm_bench::{nominal, synthetic_batch, trained_models, two_stage_schedule, typical_state};
use optoferm_core::estimate::{sse_objective, ResidualWeights};
use optoferm_core::gp::{kernel, GpHyperparams};
use optoferm_core::hybrid::rhs_hybrid;
use optoferm_core::model::{eval_kinetics, rhs_nominal};
use optoferm_core::sim::{self, DEFAULT_STEP};
use optoferm_core::{HybridDynamics, NominalDynamics, State};

fn bench_kinetics(c: &mut Criterion) {
    let params = nominal();
    let state = typical_state();
    c.bench_function("eval_kinetics", |b| {
        b.iter(|| eval_kinetics(black_box(&state), black_box(524.0), &params).unwrap())
    });
    c.bench_function("rhs_nominal", |b| {
        b.iter(|| rhs_nominal(black_box(&state), black_box(524.0), &params).unwrap())
    });
}

fn bench_integration(c: &mut Criterion) {
    let params = nominal();
    let schedule = two_stage_schedule();
    let x0 = State::new(0.0712, 0.0, 2.745, 0.0);
    let dynamics = NominalDynamics::new(&params);
    c.bench_function("integrate_8h_nominal", |b| {
        b.iter(|| sim::integrate(black_box(&x0), &schedule, &dynamics, DEFAULT_STEP).unwrap())
    });

    let models = trained_models();
    let hybrid = HybridDynamics::new(&params, &models);
    c.bench_function("integrate_8h_hybrid", |b| {
        b.iter(|| sim::integrate(black_box(&x0), &schedule, &hybrid, DEFAULT_STEP).unwrap())
    });
}

fn bench_gp(c: &mut Criterion) {
    let hp = GpHyperparams::new(1.0, 1.3, 0.01);
    let a = vec![2.1, 0.15, 0.9, 4.3, 524.0];
    let b_vec = vec![1.8, 0.18, 1.1, 5.0, 349.0];
    c.bench_function("kernel_5d", |b| {
        b.iter(|| kernel(black_box(&a), black_box(&b_vec), &hp).unwrap())
    });

    let params = nominal();
    let models = trained_models();
    let state = typical_state();
    c.bench_function("rhs_hybrid", |b| {
        b.iter(|| rhs_hybrid(black_box(&state), black_box(524.0), &params, &models).unwrap())
    });
    c.bench_function("gp_predict_mean_40pts", |b| {
        let features = [2.1, 0.15, 0.9, 4.3, 524.0];
        b.iter(|| models.lactate.predict_mean(black_box(&features)).unwrap())
    });
}

fn bench_objective(c: &mut Criterion) {
    let params = nominal();
    let datasets = vec![synthetic_batch(0.0), synthetic_batch(873.0)];
    let weights = ResidualWeights::default();
    c.bench_function("sse_objective_2_batches", |b| {
        b.iter(|| sse_objective(black_box(&params), &datasets, &weights, DEFAULT_STEP))
    });
}

criterion_group!(benches, bench_kinetics, bench_integration, bench_gp, bench_objective);
criterion_main!(benches);
