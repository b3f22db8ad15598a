use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use plrates::engine::{run, Parallelism, Problem, RunOptions, Schedule};
use plrates::spectrum::synthetic_diagonal;

// Parallel and sequential modes produce bitwise-identical trajectories, so
// the only difference measured here is wall time.
fn schedules(c: &mut Criterion) {
    let m = synthetic_diagonal(200_000, 1.5, 1.0).unwrap();
    let problem = Problem::Spectral(m);
    let cases = [
        ("hb", Schedule::Constant { alpha: 1.0, beta: 0.9 }, 200),
        ("jacobi-hb", Schedule::JacobiHb { a: 1.0, b: 0.0 }, 200),
        ("sd", Schedule::SteepestDescent, 50),
        ("stable-cg", Schedule::StableConjugateGradients, 30),
    ];
    let mut g = c.benchmark_group("run_200k_atoms");
    g.sample_size(10);
    for (name, s, steps) in cases {
        for (mode, par) in [("parallel", Parallelism::Parallel), ("sequential", Parallelism::Sequential)] {
            let opts = RunOptions::new(steps).with_parallelism(par);
            g.bench_with_input(BenchmarkId::new(name, mode), &opts, |b, o| {
                b.iter(|| run(black_box(&problem), &s, o).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, schedules);
criterion_main!(benches);
