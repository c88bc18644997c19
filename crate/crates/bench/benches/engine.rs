use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wrmc_bench::{multi_model, observable, path_model};
use wrmc_core::bench::{counterexample_f, counterexample_model, run_bench, BenchConfig, EstimatorKind};
use wrmc_core::chain::{run_chain, InitialState};
use wrmc_core::estimators::{estimate_with, Observables};
use wrmc_core::exact::{solve_poisson, transition_matrix};

fn transition(c: &mut Criterion) {
    let mut g = c.benchmark_group("transition_matrix");
    for n in [8, 32, 128] {
        let single = path_model(n);
        g.bench_with_input(BenchmarkId::new("single", n), &single, |b, m| {
            b.iter(|| transition_matrix(black_box(m)).unwrap())
        });
    }
    for n in [4, 6] {
        let multi = multi_model(n);
        g.bench_with_input(BenchmarkId::new("multi", n), &multi, |b, m| {
            b.iter(|| transition_matrix(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn poisson(c: &mut Criterion) {
    let mut g = c.benchmark_group("poisson_solve");
    for n in [8, 32, 128] {
        let m = path_model(n);
        let p = transition_matrix(&m).unwrap();
        let f = observable(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_poisson(&p, m.pi(), black_box(&f)).unwrap())
        });
    }
    g.finish();
}

fn chain(c: &mut Criterion) {
    let mut g = c.benchmark_group("chain_10k_steps");
    let single = counterexample_model();
    let multi = multi_model(6);
    for (name, m) in [("single", &single), ("multi", &multi)] {
        g.bench_function(name, |b| b.iter(|| run_chain(m, 10_000, black_box(7), InitialState::Stationary).unwrap()));
    }
    let f = counterexample_f();
    let p = transition_matrix(&single).unwrap();
    let obs = Observables::new(&f, &f).unwrap().with_transition(&p).unwrap();
    let trace = run_chain(&single, 10_000, 7, InitialState::Stationary).unwrap();
    g.bench_function("estimate", |b| b.iter(|| estimate_with(black_box(&trace), &obs).unwrap()));
    g.finish();
}

fn replications(c: &mut Criterion) {
    let m = counterexample_model();
    let f = counterexample_f();
    let cfg = BenchConfig {
        n_list: vec![1, 10, 100],
        reps: 1000,
        estimators: vec![EstimatorKind::ControlVariate],
        ..BenchConfig::default()
    };
    c.bench_function("run_bench_1000_reps", |b| b.iter(|| run_bench(&m, &f, &f, black_box(&cfg)).unwrap()));
}

criterion_group!(benches, transition, poisson, chain, replications);
criterion_main!(benches);
