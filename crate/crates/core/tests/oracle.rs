use frwmax_core::oracle::{
    advance_to, compare_flat, discrete_energy, fd_step_with, identify_hyperbolic_pde, max_stable_dt, read_dump,
    sector_probes, write_dump, CompareConfig, GridSpec, GridState, IdentifyConfig, PdeVerdict, Stencil,
};
use frwmax_core::{make_bump, CauchyProblem, Curvature, Execution, SpatialPoint, Vec3, VectorField};

fn flat_problem() -> CauchyProblem {
    let c = SpatialPoint::flat(0.0, 0.0, 0.0);
    CauchyProblem::new(
        Curvature::Flat,
        make_bump(&c, 1.0, [1.0, 0.5, -0.25]).unwrap(),
        make_bump(&c, 1.0, [0.0, 0.3, 0.2]).unwrap(),
        0.0,
    )
    .unwrap()
}

fn periodic_spec(n: usize, unit: f64) -> GridSpec {
    let dx = 4.0 / n as f64;
    let dt = max_stable_dt(Curvature::Flat, dx, 0.0, Stencil::Second);
    GridSpec::new(Curvature::Flat, Vec3::repeat(-2.0), n, dx, dt, 0.0, Stencil::Second)
        .unwrap()
        .periodic()
        .unwrap()
        .with_step_dividing(unit)
        .unwrap()
}

#[test]
fn halving_the_spacing_cuts_the_flat_error_by_three() {
    let problem = flat_problem();
    let probes = sector_probes(&SpatialPoint::flat(0.0, 0.0, 0.0), &Vec3::x(), &[1.0, 1.5], 4);
    let run = |n| {
        let config = CompareConfig { taus: vec![1.0], probes: probes.clone(), n, stencil: Stencil::Second, order: 32 };
        compare_flat(&problem, &config, Execution::Parallel).unwrap().max_rel_linf()
    };
    let (coarse, fine) = (run(24), run(47));
    assert!(coarse / fine >= 3.0, "{coarse} {fine}");
}

#[test]
fn periodic_energy_is_conserved() {
    let spec = periodic_spec(24, 1.0);
    let f = make_bump(&SpatialPoint::flat(0.0, 0.0, 0.0), 1.2, [1.0, -0.5, 0.3]).unwrap();
    let g = VectorField::zero(Curvature::Flat);
    let mut state = GridState::from_data(&spec, &f, &g, 0.0, Execution::Sequential).unwrap();
    let start = discrete_energy(&state, &spec);
    for _ in 0..300 {
        fd_step_with(&mut state, &spec, Execution::Sequential);
    }
    let drift = (discrete_energy(&state, &spec) - start).abs() / start;
    assert!(drift < 1e-10, "{drift}");
}

#[test]
fn both_policies_reach_the_same_state() {
    let spec = periodic_spec(20, 0.5);
    let f = make_bump(&SpatialPoint::flat(0.3, 0.0, -0.2), 1.0, [0.2, 1.0, 0.0]).unwrap();
    let g = make_bump(&SpatialPoint::flat(-0.2, 0.1, 0.0), 0.8, [0.0, 0.0, 1.0]).unwrap();
    let mut a = GridState::from_data(&spec, &f, &g, 0.0, Execution::Sequential).unwrap();
    let mut b = GridState::from_data(&spec, &f, &g, 0.0, Execution::Parallel).unwrap();
    advance_to(&mut a, &spec, 0.5, Execution::Sequential).unwrap();
    advance_to(&mut b, &spec, 0.5, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dumps_survive_a_file_round_trip() {
    let spec = periodic_spec(12, 0.3);
    let f = make_bump(&SpatialPoint::flat(0.0, 0.0, 0.0), 1.0, [1.0, 2.0, 3.0]).unwrap();
    let mut state =
        GridState::from_data(&spec, &f, &VectorField::zero(Curvature::Flat), 0.0, Execution::Sequential).unwrap();
    advance_to(&mut state, &spec, 0.3, Execution::Sequential).unwrap();
    let mut file = tempfile::tempfile().unwrap();
    write_dump(&mut file, &state, &spec).unwrap();
    use std::io::{Seek, SeekFrom};
    file.seek(SeekFrom::Start(0)).unwrap();
    let dump = read_dump(std::io::BufReader::new(file)).unwrap();
    assert_eq!((dump.n, dump.dx, dump.dt, dump.tau), (spec.n, spec.dx, spec.dt, state.tau()));
    for mu in 0..3 {
        assert_eq!(dump.components[mu], state.component(mu));
    }
    assert!(read_dump(&b"not a dump at all"[..]).is_err());
}

#[test]
fn zero_hyperbolic_data_is_degenerate() {
    let zero = VectorField::zero(Curvature::Hyperbolic);
    let problem = CauchyProblem::new(Curvature::Hyperbolic, zero.clone(), zero, 0.0).unwrap();
    let config = IdentifyConfig {
        tau: 1.0,
        probes: vec![SpatialPoint::hyperbolic(0.0, 0.0, 1.0).unwrap()],
        n: 16,
        stencil: Stencil::Second,
        order: 16,
    };
    let report = identify_hyperbolic_pde(&problem, &config, Execution::Sequential).unwrap();
    assert_eq!(report.verdict, PdeVerdict::Degenerate);
}

#[test]
fn comparison_times_must_follow_the_data() {
    let problem = flat_problem();
    let mut config = CompareConfig {
        taus: vec![-0.5],
        probes: vec![SpatialPoint::flat(1.0, 0.0, 0.0)],
        n: 16,
        stencil: Stencil::Second,
        order: 16,
    };
    assert!(compare_flat(&problem, &config, Execution::Sequential).is_err());
    config.taus = vec![0.4, 0.7];
    assert!(compare_flat(&problem, &config, Execution::Sequential).is_err());
    config.taus = vec![];
    assert!(compare_flat(&problem, &config, Execution::Sequential).is_err());
}
