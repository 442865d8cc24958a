//! Compares the two execution modes of the round engine on identical
//! workloads. With the `parallel` feature (the default) the parallel mode
//! fans honest node steps out over rayon; without it both modes run the
//! same sequential loop, so the comparison doubles as a check that the
//! fallback costs nothing.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bcube::sim::{run_experiment, ExecMode, Experiment};

fn round_engine(c: &mut Criterion) {
    let mut group = c.benchmark_group("invocation");
    group.sample_size(10);
    for (label, strategy) in [("honest-60", "honest-compliant"), ("flooder-60", "flooder")] {
        for exec in [ExecMode::Sequential, ExecMode::Parallel] {
            let mut exp = Experiment::new(60, 0.5, strategy, 11);
            exp.target_degree = 8;
            exp.max_degree = 16;
            exp.m = 3;
            exp.s = 8;
            exp.object_bits = 16_384;
            exp.exec = exec;
            let name = match exec {
                ExecMode::Sequential => "sequential",
                ExecMode::Parallel => "parallel",
            };
            group.bench_with_input(BenchmarkId::new(label, name), &exp, |b, exp| {
                b.iter(|| run_experiment(exp).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, round_engine);
criterion_main!(benches);
