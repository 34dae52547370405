//! Sequential against rayon-parallel execution for the two hot loops: batch
//! evaluation of the closed-form solution and one leapfrog step.
//!
//! Build with `--no-default-features` to see the parallel arm collapse onto
//! the sequential one.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use frwmax_core::analysis::{points_at_distance, random_directions};
use frwmax_core::oracle::{fd_step_with, max_stable_dt, GridSpec, GridState, Stencil};
use frwmax_core::{make_bump, solve_batch, CauchyProblem, Curvature, Execution, SpacetimePoint, SpatialPoint, Vec3};
use std::hint::black_box;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn solve_batch_bench(c: &mut Criterion) {
    let center = SpatialPoint::hyperbolic(0.0, 0.0, 1.0).unwrap();
    let problem = CauchyProblem::new(
        Curvature::Hyperbolic,
        make_bump(&center, 0.5, [1.0, 0.5, -0.25]).unwrap(),
        make_bump(&center, 0.5, [0.0, 0.3, 0.2]).unwrap(),
        0.0,
    )
    .unwrap();
    let points: Vec<SpacetimePoint> = points_at_distance(&center, &random_directions(64, 1), 1.5)
        .into_iter()
        .map(|x| SpacetimePoint::new(1.5, x))
        .collect();
    let mut group = c.benchmark_group("solve_batch");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new(name, points.len()), &exec, |b, &exec| {
            b.iter(|| solve_batch(&problem, black_box(&points), 32, exec).unwrap())
        });
    }
    group.finish();
}

fn fd_step_bench(c: &mut Criterion) {
    let n = 64;
    let dx = 4.0 / (n - 1) as f64;
    let lower = Vec3::new(-2.0, -2.0, 0.5);
    let z_max = lower.z + 4.0;
    let dt = max_stable_dt(Curvature::Hyperbolic, dx, z_max, Stencil::Second);
    let spec = GridSpec::new(Curvature::Hyperbolic, lower, n, dx, dt, 1.0, Stencil::Second).unwrap();
    let center = SpatialPoint::hyperbolic(0.0, 0.0, 2.5).unwrap();
    let f = make_bump(&center, 0.8, [1.0, 0.0, 0.5]).unwrap();
    let g = make_bump(&center, 0.8, [0.0, 1.0, 0.0]).unwrap();
    let start = GridState::from_data(&spec, &f, &g, 0.0, Execution::Sequential).unwrap();
    let mut group = c.benchmark_group("fd_step");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new(name, n), &exec, |b, &exec| {
            let mut state = start.clone();
            b.iter(|| fd_step_with(black_box(&mut state), &spec, exec))
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = solve_batch_bench, fd_step_bench
}
criterion_main!(benches);
