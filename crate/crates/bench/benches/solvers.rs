use std::hint::black_box;

use adherence::micro::{heterogeneous_population, init_rng, run_rng};
use adherence::{
    allocation_prob_exact, eval_g, mf_trajectory, optimal_u, solve_x_star, Demand, MicroState, ModelParams,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn section_iv() -> ModelParams {
    ModelParams::new(100, 0.3, 50.0, 0.5).unwrap()
}

fn demand(c: &mut Criterion) {
    let params = section_iv();
    let table = params.poisson_table().unwrap();
    c.bench_function("eval_g", |b| b.iter(|| eval_g(black_box(35.65), &table).unwrap()));
    c.bench_function("poisson_table/lambda=50", |b| {
        b.iter(|| black_box(section_iv()).poisson_table().unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let params = section_iv();
    let table = params.poisson_table().unwrap();
    c.bench_function("solve_x_star", |b| {
        b.iter(|| solve_x_star(black_box(0.7), &params, &table, 1e-10).unwrap())
    });
    c.bench_function("optimal_u", |b| {
        b.iter(|| optimal_u(&params, black_box(0.9), 1e-6, 1e-10, &table).unwrap())
    });
    c.bench_function("mf_trajectory/T=1000", |b| {
        b.iter(|| mf_trajectory(&params, &table, 0.25, 4.0, black_box(1000)).unwrap())
    });
}

fn micro(c: &mut Criterion) {
    let mut group = c.benchmark_group("allocation_prob_exact");
    for k in [10usize, 100, 500] {
        let params = ModelParams::new(k, 0.3, k as f64 / 2.0, 0.5).unwrap();
        let table = params.poisson_table().unwrap();
        let q: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(k), &q, |b, q| {
            b.iter(|| allocation_prob_exact(q, 0, &table).unwrap())
        });
    }
    group.finish();

    let agents = heterogeneous_population(100, (1.0, 50.0), (1.0, 50.0), (0.0, 1.0), &mut init_rng(1)).unwrap();
    let mut state = MicroState::new(agents).unwrap();
    let demand = Demand::poisson(80.0).unwrap();
    let mut rng = run_rng(1, 0);
    c.bench_function("sample_epoch+update/K=100", |b| {
        b.iter(|| {
            let outcome = state.sample_epoch(0.9, &demand, &mut rng);
            state.update_beliefs(&outcome);
        })
    });
}

criterion_group!(benches, demand, solvers, micro);
criterion_main!(benches);
