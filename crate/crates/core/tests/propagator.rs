use frwmax_core::analysis::pde_residual;
use frwmax_core::geometry::DEFAULT_ORDER;
use frwmax_core::propagator::{richardson_limit, RICHARDSON_LEVELS};
use frwmax_core::{
    geodesic_distance, make_bump, potential, solve, solve_batch, solve_from_singularity, CauchyProblem, Curvature,
    Execution, SpacetimePoint, SpatialPoint, VectorField,
};

fn flat_problem(tau0: f64) -> CauchyProblem {
    let c = SpatialPoint::flat(0.0, 0.0, 0.0);
    CauchyProblem::new(
        Curvature::Flat,
        make_bump(&c, 1.0, [1.0, 0.5, -0.25]).unwrap(),
        make_bump(&c, 1.0, [0.0, 0.3, 0.2]).unwrap(),
        tau0,
    )
    .unwrap()
}

fn hyperbolic_problem(tau0: f64) -> CauchyProblem {
    let c = SpatialPoint::hyperbolic(0.0, 0.0, 1.0).unwrap();
    CauchyProblem::new(
        Curvature::Hyperbolic,
        make_bump(&c, 0.5, [1.0, 0.5, -0.25]).unwrap(),
        make_bump(&c, 0.5, [0.0, 0.3, 0.2]).unwrap(),
        tau0,
    )
    .unwrap()
}

fn max_abs(v: &[f64; 3]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn zero_outside_the_cone_and_inside_the_shell() {
    for problem in [flat_problem(0.5), hyperbolic_problem(0.5)] {
        let (c, rho) = problem.support().unwrap();
        let r = 3.0;
        let tau = problem.tau0() + r;
        let dirs = frwmax_core::analysis::random_directions(16, 11);
        for s in [0.0, 0.5 * (r - rho), r - rho - 1e-6, r + rho + 1e-6, 2.0 * r] {
            for x in frwmax_core::analysis::points_at_distance(&c, &dirs, s) {
                let sample = solve(&problem, &SpacetimePoint::new(tau, x), DEFAULT_ORDER).unwrap();
                assert!(max_abs(&sample.a) <= 1e-9, "d = {s}: {:?}", sample.a);
                assert!(max_abs(&sample.a_tau) <= 1e-9);
            }
        }
    }
}

#[test]
fn shell_values_are_not_zero() {
    for problem in [flat_problem(0.0), hyperbolic_problem(0.0)] {
        let (c, _) = problem.support().unwrap();
        let x = frwmax_core::analysis::points_at_distance(&c, &[[0.3, -0.2, 0.9].into()], 2.0)[0];
        let a = potential(&problem, &SpacetimePoint::new(2.0, x), DEFAULT_ORDER).unwrap();
        assert!(max_abs(&a) > 1e-4);
    }
}

#[test]
fn doubling_the_order_changes_little() {
    for problem in [flat_problem(0.0), hyperbolic_problem(0.0)] {
        let (c, _) = problem.support().unwrap();
        let dirs = frwmax_core::analysis::random_directions(6, 5);
        for (tau, s) in [(0.4, 0.2), (1.3, 1.0), (3.0, 3.2)] {
            for x in frwmax_core::analysis::points_at_distance(&c, &dirs, s) {
                let pt = SpacetimePoint::new(tau, x);
                let lo = solve(&problem, &pt, DEFAULT_ORDER).unwrap();
                let hi = solve(&problem, &pt, 2 * DEFAULT_ORDER).unwrap();
                for m in 0..3 {
                    assert!((lo.a[m] - hi.a[m]).abs() < 1e-8, "{tau} {s}: {:?} vs {:?}", lo.a, hi.a);
                    // Second derivatives of the data enter here.
                    assert!((lo.a_tau[m] - hi.a_tau[m]).abs() < 1e-5, "{tau} {s}: {:?} vs {:?}", lo.a_tau, hi.a_tau);
                }
            }
        }
    }
}

#[test]
fn time_derivative_matches_differences_of_the_potential() {
    for problem in [flat_problem(0.2), hyperbolic_problem(0.2)] {
        let (c, _) = problem.support().unwrap();
        let x = frwmax_core::analysis::points_at_distance(&c, &[[1.0, 0.4, -0.3].into()], 0.7)[0];
        for tau in [0.6, 1.1, 1.7] {
            let sample = solve(&problem, &SpacetimePoint::new(tau, x), 48).unwrap();
            let d = |h: f64| {
                let up = potential(&problem, &SpacetimePoint::new(tau + h, x), 48).unwrap();
                let down = potential(&problem, &SpacetimePoint::new(tau - h, x), 48).unwrap();
                [0, 1, 2].map(|m| (up[m] - down[m]) / (2.0 * h))
            };
            let (d1, d2) = (d(1e-3), d(5e-4));
            for m in 0..3 {
                let extrapolated = (4.0 * d2[m] - d1[m]) / 3.0;
                assert!((sample.a_tau[m] - extrapolated).abs() <= 1e-7, "{tau}: {} vs {extrapolated}", sample.a_tau[m]);
            }
        }
    }
}

#[test]
fn regular_slice_data_is_recovered() {
    for problem in [flat_problem(1.5), hyperbolic_problem(1.5)] {
        let (c, rho) = problem.support().unwrap();
        let x = frwmax_core::analysis::points_at_distance(&c, &[[0.0, 1.0, 1.0].into()], 0.4 * rho)[0];
        let f = problem.f().eval(&x).unwrap();
        let g = problem.g().eval(&x).unwrap();
        let errors: Vec<(f64, f64)> = (0..6)
            .map(|k| {
                let tau = problem.tau0() + 0.1 * 0.5f64.powi(k);
                let s = solve(&problem, &SpacetimePoint::new(tau, x), DEFAULT_ORDER).unwrap();
                let ea = (0..3).map(|m| (s.a[m] - f[m]).abs()).fold(0.0, f64::max);
                let eb = (0..3).map(|m| (s.a_tau[m] - g[m]).abs()).fold(0.0, f64::max);
                (ea, eb)
            })
            .collect();
        // First order in the gap: each halving roughly halves both errors.
        for w in errors[3..].windows(2) {
            assert!(w[0].0 / w[1].0 > 1.7 && w[0].1 / w[1].1 > 1.7, "{errors:?}");
        }
        let last = errors[5];
        assert!(last.0 < 1e-3 && last.1 < 5e-2, "{errors:?}");
    }
}

#[test]
fn singular_limit_extrapolates_to_the_data() {
    for problem in [flat_problem(0.0), hyperbolic_problem(0.0)] {
        let (c, rho) = problem.support().unwrap();
        let x = frwmax_core::analysis::points_at_distance(&c, &[[0.2, 0.1, 1.0].into()], 0.3 * rho)[0];
        let limit = richardson_limit(&problem, &x, DEFAULT_ORDER, RICHARDSON_LEVELS).unwrap();
        assert!(limit.error_a <= 1e-6 && limit.error_a_tau <= 1e-6, "{limit:?}");
    }
}

#[test]
fn reflection_keeps_the_parity_of_each_term() {
    let c = SpatialPoint::flat(0.0, 0.0, 0.0);
    let f = make_bump(&c, 1.0, [1.0, -0.4, 0.3]).unwrap();
    let zero = VectorField::zero(Curvature::Flat);
    let only_f = CauchyProblem::singular(Curvature::Flat, f, zero.clone()).unwrap();
    let x = SpatialPoint::flat(0.3, 0.2, 0.1);
    for tau in [0.1, 0.6, 1.4] {
        let plus = solve_from_singularity(&only_f, tau, &x, DEFAULT_ORDER).unwrap();
        let minus = solve_from_singularity(&only_f, -tau, &x, DEFAULT_ORDER).unwrap();
        for m in 0..3 {
            assert_eq!(plus.a[m], minus.a[m]);
            assert_eq!(plus.a_tau[m], -minus.a_tau[m]);
        }
    }
}

/// `∂²_τA − (L + m)A` at a point on the shell for a sequence of steps.
fn residuals(problem: &CauchyProblem, point: &SpacetimePoint, mass_shift: f64) -> Vec<f64> {
    [0.1, 0.05, 0.025].iter().map(|&h| pde_residual(problem, point, h, mass_shift, 48).unwrap()).collect()
}

#[test]
fn flat_formula_solves_the_wave_equation_to_second_order() {
    let problem = flat_problem(0.0);
    let point = SpacetimePoint::new(3.0, SpatialPoint::flat(2.6, 0.9, -0.4));
    let r = residuals(&problem, &point, 0.0);
    assert!(r[0] / r[1] >= 3.0 && r[1] / r[2] >= 3.0, "{r:?}");
}

#[test]
fn hyperbolic_formula_solves_the_shifted_equation() {
    let problem = hyperbolic_problem(0.0);
    let (c, _) = problem.support().unwrap();
    let x = frwmax_core::analysis::points_at_distance(&c, &[[0.5, 0.2, 0.6].into()], 1.2)[0];
    let point = SpacetimePoint::new(1.2, x);
    assert!((geodesic_distance(&c, &x).unwrap() - 1.2).abs() < 1e-12);
    let shifted = residuals(&problem, &point, 1.0);
    assert!(shifted[0] / shifted[1] >= 3.0 && shifted[1] / shifted[2] >= 3.0, "{shifted:?}");
    let unshifted = residuals(&problem, &point, 0.0);
    // The unshifted residual tends to |A| instead of zero.
    let a = max_abs(&potential(&problem, &point, 48).unwrap());
    assert!(unshifted[2] > 20.0 * shifted[2] && unshifted[2] > 0.5 * a, "{unshifted:?} {shifted:?} {a}");
}

#[test]
fn batch_results_do_not_depend_on_the_policy() {
    let problem = hyperbolic_problem(0.0);
    let (c, _) = problem.support().unwrap();
    let dirs = frwmax_core::analysis::random_directions(20, 2);
    let points: Vec<SpacetimePoint> = [-1.0f64, 0.5, 1.5]
        .iter()
        .flat_map(|&tau| {
            frwmax_core::analysis::points_at_distance(&c, &dirs, tau.abs())
                .into_iter()
                .map(move |x| SpacetimePoint::new(tau, x))
        })
        .collect();
    let seq = solve_batch(&problem, &points, 24, Execution::Sequential).unwrap();
    let par = solve_batch(&problem, &points, 24, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn mismatched_charts_and_bad_times_are_rejected() {
    let problem = flat_problem(1.0);
    let h = SpatialPoint::hyperbolic(0.0, 0.0, 1.0).unwrap();
    assert!(solve(&problem, &SpacetimePoint::new(2.0, h), 16).is_err());
    assert!(solve(&problem, &SpacetimePoint::new(0.5, SpatialPoint::flat(0.0, 0.0, 0.0)), 16).is_err());
    assert!(solve_from_singularity(&problem, 0.5, &SpatialPoint::flat(0.0, 0.0, 0.0), 16).is_err());
    let f = make_bump(&SpatialPoint::flat(0.0, 0.0, 0.0), 1.0, [1.0, 0.0, 0.0]).unwrap();
    assert!(CauchyProblem::new(Curvature::Hyperbolic, f, VectorField::zero(Curvature::Flat), 0.0).is_err());
}
