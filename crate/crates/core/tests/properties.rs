use frwmax_core::analysis::{
    self, cross_singularity_trace, huygens_map, huygens_probes, DecayModel, DecaySample, DecayVariable,
};
use frwmax_core::{
    geodesic_distance, make_bump, solve, spherical_mean, t_to_tau, tau_to_t, CauchyProblem, ConformalTime, Curvature,
    Execution, SpacetimePoint, SpatialPoint, SphereQuadrature, VectorField,
};
use proptest::prelude::*;

fn curvature() -> impl Strategy<Value = Curvature> {
    prop_oneof![Just(Curvature::Flat), Just(Curvature::Hyperbolic)]
}

fn point(k: Curvature) -> impl Strategy<Value = SpatialPoint> {
    (-3.0..3.0f64, -3.0..3.0f64, 0.2..4.0f64).prop_map(move |(x, y, z)| SpatialPoint::new(k, [x, y, z].into()).unwrap())
}

fn amplitude() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-2.0..2.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_is_a_metric((p, q, r) in curvature().prop_flat_map(|k| (point(k), point(k), point(k)))) {
        let pq = geodesic_distance(&p, &q).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - geodesic_distance(&q, &p).unwrap()).abs() <= 1e-12 * (1.0 + pq));
        prop_assert_eq!(geodesic_distance(&p, &p).unwrap(), 0.0);
        let pr = geodesic_distance(&p, &r).unwrap();
        let rq = geodesic_distance(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12 * (1.0 + pr + rq));
    }

    #[test]
    fn time_maps_round_trip(tau in -25.0..25.0f64, k in curvature()) {
        let t = tau_to_t(ConformalTime::new(tau, k));
        let back = t_to_tau(t, k).unwrap().tau;
        prop_assert!((back - tau).abs() <= 1e-10 * tau.abs().max(1.0));
        prop_assert_eq!(tau_to_t(ConformalTime::new(-tau, k)), -t);
    }

    #[test]
    fn time_maps_are_increasing(a in -10.0..10.0f64, gap in 1e-3..5.0f64, k in curvature()) {
        let lo = tau_to_t(ConformalTime::new(a, k));
        let hi = tau_to_t(ConformalTime::new(a + gap, k));
        prop_assert!(hi > lo);
    }

    #[test]
    fn sphere_weights_sum_to_area(k in curvature(), r in 1e-3..12.0f64, order in 4usize..40) {
        let c = match k {
            Curvature::Flat => SpatialPoint::flat(0.1, 0.2, 0.3),
            Curvature::Hyperbolic => SpatialPoint::hyperbolic(0.1, 0.2, 1.7).unwrap(),
        };
        let rule = SphereQuadrature::build(&c, r, order).unwrap();
        prop_assert!((rule.total_weight() / k.sphere_area(r) - 1.0).abs() <= 1e-12);
        for p in rule.nodes() {
            prop_assert!((geodesic_distance(&c, p).unwrap() - r).abs() <= 1e-9 * r.max(1.0));
        }
    }

    #[test]
    fn solution_is_linear_in_data(
        k in curvature(),
        a1 in amplitude(), a2 in amplitude(), b1 in amplitude(), b2 in amplitude(),
        alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
        tau in 0.05..2.5f64,
    ) {
        let (c1, c2, x) = match k {
            Curvature::Flat => (
                SpatialPoint::flat(0.0, 0.0, 0.0),
                SpatialPoint::flat(0.8, 0.2, -0.4),
                SpatialPoint::flat(0.5, 0.5, 0.1),
            ),
            Curvature::Hyperbolic => (
                SpatialPoint::hyperbolic(0.0, 0.0, 1.0).unwrap(),
                SpatialPoint::hyperbolic(0.3, 0.0, 1.4).unwrap(),
                SpatialPoint::hyperbolic(0.2, 0.3, 1.2).unwrap(),
            ),
        };
        let f1 = make_bump(&c1, 0.5, a1).unwrap();
        let g1 = make_bump(&c1, 0.5, b1).unwrap();
        let f2 = make_bump(&c2, 0.4, a2).unwrap();
        let g2 = make_bump(&c2, 0.4, b2).unwrap();
        let p1 = CauchyProblem::new(k, f1.clone(), g1.clone(), 0.0).unwrap();
        let p2 = CauchyProblem::new(k, f2.clone(), g2.clone(), 0.0).unwrap();
        let both = CauchyProblem::new(
            k,
            f1.scaled(alpha).plus(&f2.scaled(beta)).unwrap(),
            g1.scaled(alpha).plus(&g2.scaled(beta)).unwrap(),
            0.0,
        ).unwrap();
        let pt = SpacetimePoint::new(tau, x);
        let (s1, s2, s) = (solve(&p1, &pt, 24).unwrap(), solve(&p2, &pt, 24).unwrap(), solve(&both, &pt, 24).unwrap());
        let flat = |x: &frwmax_core::SolutionSample| [x.a, x.a_tau].concat();
        let (v, v1, v2) = (flat(&s), flat(&s1), flat(&s2));
        let scale = v1.iter().map(|b| (alpha * b).abs()).chain(v2.iter().map(|c| (beta * c).abs())).fold(1e-300, f64::max);
        for ((a, b), c) in v.iter().zip(&v1).zip(&v2) {
            prop_assert!((a - (alpha * b + beta * c)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn mean_of_scaled_field_scales(k in curvature(), amp in amplitude(), factor in -5.0..5.0f64, r in 0.05..3.0f64) {
        let c = match k {
            Curvature::Flat => SpatialPoint::flat(0.0, 0.0, 0.0),
            Curvature::Hyperbolic => SpatialPoint::hyperbolic(0.0, 0.0, 2.0).unwrap(),
        };
        let x = match k {
            Curvature::Flat => SpatialPoint::flat(0.4, 0.0, 0.0),
            Curvature::Hyperbolic => SpatialPoint::hyperbolic(0.4, 0.0, 2.0).unwrap(),
        };
        let f = make_bump(&c, 1.0, amp).unwrap();
        let m = spherical_mean(&f, &x, r, 16).unwrap();
        let ms = spherical_mean(&f.scaled(factor), &x, r, 16).unwrap();
        for (a, b) in m.iter().zip(&ms) {
            prop_assert!((factor * a - b).abs() <= 1e-14 * (1.0 + a.abs() * factor.abs()));
        }
    }

    #[test]
    fn decay_fit_recovers_synthetic_exponents(p in -3.0..-0.2f64, c in 0.1..10.0f64) {
        let taus = analysis::geometric_grid(20.0, 200.0, 9);
        let series: Vec<DecaySample> = taus.iter().map(|&tau| DecaySample { tau, t: tau * tau * tau / 3.0, sup: c * tau.powf(p) }).collect();
        let fit = analysis::fit_series(&series, DecayModel::PowerLaw, DecayVariable::ConformalTau).unwrap();
        prop_assert!((fit.estimate - p).abs() <= 1e-10);
        let fit_t = analysis::fit_series(&series, DecayModel::PowerLaw, DecayVariable::CosmologicalT).unwrap();
        prop_assert!((fit_t.estimate - p / 3.0).abs() <= 1e-10);
        let exp_series: Vec<DecaySample> = taus.iter().map(|&tau| DecaySample { tau, t: 0.0, sup: c * (p * tau / 50.0).exp() }).collect();
        let fit_e = analysis::fit_series(&exp_series, DecayModel::Exponential, DecayVariable::ConformalTau).unwrap();
        prop_assert!((fit_e.estimate - p / 50.0).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn huygens_classification_is_scale_invariant(k in curvature(), factor in 0.1..20.0f64, seed in 0u64..1000) {
        let (c, radius) = match k {
            Curvature::Flat => (SpatialPoint::flat(0.0, 0.0, 0.0), 1.0),
            Curvature::Hyperbolic => (SpatialPoint::hyperbolic(0.0, 0.0, 1.0).unwrap(), 0.3),
        };
        let f = make_bump(&c, radius, [1.0, 0.0, 0.5]).unwrap();
        let g = make_bump(&c, radius, [0.0, 0.4, 0.0]).unwrap();
        let problem = CauchyProblem::new(k, f, g, 0.0).unwrap();
        let rho = problem.support().unwrap().1;
        let tau = 10.0 * rho;
        let probes = huygens_probes(&problem, tau, 6, seed);
        let base = huygens_map(&problem, tau, &probes, 16, Execution::Sequential).unwrap();
        let scaled = huygens_map(&problem.scaled(factor).unwrap(), tau, &probes, 16, Execution::Sequential).unwrap();
        for (a, b) in base.entries.iter().zip(&scaled.entries) {
            prop_assert_eq!(a.class, b.class);
            prop_assert!((b.magnitude - factor * a.magnitude).abs() <= 1e-12 * factor * a.magnitude.max(1e-300));
        }
        prop_assert!((scaled.data_scale - factor * base.data_scale).abs() <= 1e-12 * factor * base.data_scale);
        prop_assert!(base.off_shell_vanishes() && scaled.off_shell_vanishes());
    }

    #[test]
    fn trace_is_odd_when_initial_value_vanishes(amp in amplitude(), dx in -0.5..0.5f64) {
        let c = SpatialPoint::flat(0.0, 0.0, 0.0);
        let g = make_bump(&c, 1.0, amp).unwrap();
        let problem = CauchyProblem::singular(Curvature::Flat, VectorField::zero(Curvature::Flat), g).unwrap();
        let x = SpatialPoint::flat(dx, 0.1, 0.0);
        let trace = cross_singularity_trace(&problem, &x, &analysis::symmetric_halving_grid(0.5, 6), 16, Execution::Sequential).unwrap();
        let size = trace.points.iter().flat_map(|p| p.a).fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(trace.max_odd_defect() <= 1e-14 * size.max(1e-300));
    }
}
