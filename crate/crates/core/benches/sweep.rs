use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pe_consensus::{
    initial_state, rhs, run_sweep_with, Execution, InfluenceKernel, SweepSpec, WeightMatrix,
};

fn small_sweep(kernel: InfluenceKernel) -> SweepSpec {
    let mut spec = SweepSpec::standard(kernel, 8);
    spec.mu_values = vec![1.0, 0.3];
    spec
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, kernel) in [
        ("constant", InfluenceKernel::constant(1.0)),
        ("inverse-square", InfluenceKernel::inverse_square()),
    ] {
        let spec = small_sweep(kernel);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let id = BenchmarkId::new(format!("{exec:?}"), name);
            group.bench_with_input(id, &spec, |b, spec| {
                b.iter(|| run_sweep_with(black_box(spec), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn right_hand_side(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for agents in [10, 50, 200] {
        let mut spec = SweepSpec::standard(InfluenceKernel::inverse_square(), 1);
        spec.agents = agents;
        let state = initial_state(&spec, 0).unwrap();
        let weights = WeightMatrix::ones(agents);
        let model = spec.model();
        group.bench_with_input(BenchmarkId::from_parameter(agents), &state, |b, s| {
            b.iter(|| rhs(black_box(s), &weights, &model).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, right_hand_side);
criterion_main!(benches);
