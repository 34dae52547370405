//! Task planning (validation of every parameter up front) and execution.

use frwmax_core::analysis::{
    check_asymptotic_range, cross_singularity_trace, decay_series, fit_series, geometric_grid, halving_sequence,
    huygens_map, huygens_probes, linear_grid, points_at_distance, random_directions, singular_limit_report,
    symmetric_halving_grid, DecayModel, DecayVariable, ProbeClass, ShellProbes, MIN_FIT_SAMPLES,
};
use frwmax_core::oracle::{
    compare_flat, identify_hyperbolic_pde, sector_probes, CompareConfig, IdentifyConfig, PdeVerdict, Stencil,
    MAX_POINTS_PER_AXIS,
};
use frwmax_core::{
    make_bump, solve_batch, CauchyProblem, Curvature, Execution, SpacetimePoint, SpatialPoint, Vec3, VectorField,
};
use serde_json::{json, Value};

use crate::config::{ConfigErrors, Flag, Floats, Real, Settings, Triple, Triples};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Propagate,
    Decay,
    Huygens,
    SingularLimit,
    CrossSingularity,
    OracleCompare,
    IdentifyPde,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Propagate => "propagate",
            Task::Decay => "decay",
            Task::Huygens => "huygens",
            Task::SingularLimit => "singular-limit",
            Task::CrossSingularity => "cross-singularity",
            Task::OracleCompare => "oracle-compare",
            Task::IdentifyPde => "identify-pde",
        }
    }

    fn needs_singular_data(self) -> bool {
        matches!(self, Task::SingularLimit | Task::CrossSingularity)
    }
}

pub struct Output {
    pub dir: String,
    pub name: String,
    pub timing: bool,
}

enum Job {
    Propagate {
        points: Vec<SpacetimePoint>,
    },
    Decay {
        taus: Vec<f64>,
        probes: ShellProbes,
        model: DecayModel,
        variable: DecayVariable,
        expected: f64,
        tolerance: f64,
    },
    Huygens {
        tau: f64,
        directions: usize,
    },
    SingularLimit {
        xs: Vec<SpatialPoint>,
        taus: Vec<f64>,
        tolerance: f64,
    },
    CrossSingularity {
        x: SpatialPoint,
        taus: Vec<f64>,
    },
    OracleCompare {
        config: CompareConfig,
        tolerance: f64,
    },
    IdentifyPde {
        config: IdentifyConfig,
    },
}

/// A validated run.
pub struct Plan {
    pub task: Task,
    pub output: Output,
    problem: CauchyProblem,
    order: usize,
    seed: u64,
    job: Job,
}

pub struct Report {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub metrics: Value,
    pub pass: bool,
}

fn fmt_triple(v: [f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn field(s: &mut Settings, chart: Curvature, name: &str, center: [f64; 3], radius: f64, amp: [f64; 3]) -> VectorField {
    if amp.iter().all(|a| *a == 0.0) {
        return VectorField::zero(chart);
    }
    let center = match SpatialPoint::new(chart, center.into()) {
        Ok(c) => c,
        Err(e) => {
            s.issue(&format!("{name}.center"), e.to_string());
            return VectorField::zero(chart);
        }
    };
    make_bump(&center, radius, amp).unwrap_or_else(|e| {
        s.issue(&format!("{name}.radius"), e.to_string());
        VectorField::zero(chart)
    })
}

fn problem(s: &mut Settings, task: Task) -> CauchyProblem {
    let chart: Curvature = s.get("curvature", "flat");
    let (center, radius) = match chart {
        Curvature::Flat => ("0,0,0", "1"),
        Curvature::Hyperbolic => ("0,0,1", "0.3"),
    };
    // The PDE identification runs a single wide bump in f by default.
    let (radius, f_amp, g_amp) =
        if task == Task::IdentifyPde { ("0.6", "1,0,0", "0,0,0") } else { (radius, "1,0.5,-0.25", "0,0.3,0.2") };
    let tau0_default = if task.needs_singular_data() || chart == Curvature::Hyperbolic { "0" } else { "1" };
    let Real(tau0) = s.get("tau0", tau0_default);
    let Triple(fc) = s.get("f.center", center);
    let Real(fr) = s.get("f.radius", radius);
    let Triple(fa) = s.get("f.amplitude", f_amp);
    let Triple(gc) = s.get("g.center", &fmt_triple(fc));
    let Real(gr) = s.get("g.radius", &fr.to_string());
    let Triple(ga) = s.get("g.amplitude", g_amp);
    let f = field(s, chart, "f", fc, fr, fa);
    let g = field(s, chart, "g", gc, gr, ga);
    let vanishing = |a: [f64; 3]| a.iter().all(|v| *v == 0.0);
    if task != Task::Propagate && vanishing(fa) && vanishing(ga) {
        s.issue("f.amplitude", "this task needs non-zero data in f or g");
    }
    CauchyProblem::new(chart, f, g, tau0).unwrap_or_else(|e| {
        s.issue("tau0", e.to_string());
        CauchyProblem::new(chart, VectorField::zero(chart), VectorField::zero(chart), 0.0).expect("zero problem")
    })
}

fn points(s: &mut Settings, key: &str, chart: Curvature, coords: &[[f64; 3]]) -> Vec<SpatialPoint> {
    let mut out = Vec::with_capacity(coords.len());
    for c in coords {
        match SpatialPoint::new(chart, (*c).into()) {
            Ok(p) => out.push(p),
            Err(e) => s.issue(key, e.to_string()),
        }
    }
    out
}

fn grid_size(s: &mut Settings, default: &str) -> usize {
    let n: usize = s.get("n", default);
    s.require((5..=MAX_POINTS_PER_AXIS).contains(&n), "n", format!("must lie in 5..={MAX_POINTS_PER_AXIS}, got {n}"));
    n
}

fn directions(s: &mut Settings, default: &str) -> usize {
    let d: usize = s.get("directions", default);
    s.require(d >= 1, "directions", "must be at least 1");
    d
}

/// Reference value and tolerance for the decay checks with known targets.
fn decay_target(chart: Curvature, model: DecayModel, variable: DecayVariable) -> Option<(f64, f64)> {
    use DecayModel::*;
    use DecayVariable::*;
    match (chart, model, variable) {
        (Curvature::Flat, PowerLaw, ConformalTau) => Some((-1.0, 0.05)),
        (Curvature::Flat, PowerLaw, CosmologicalT) => Some((-1.0 / 3.0, 0.05)),
        (Curvature::Hyperbolic, Exponential, ConformalTau) => Some((-1.0, 0.05)),
        (Curvature::Hyperbolic, PowerLaw, CosmologicalT) => Some((-1.0, 0.1)),
        _ => None,
    }
}

/// Resolves and validates every setting `task` uses. Nothing expensive runs
/// here except cheap geometric set-up.
pub fn plan(task: Task, s: &mut Settings) -> Result<Plan, ConfigErrors> {
    let problem = problem(s, task);
    let chart = problem.curvature();
    let tau0 = problem.tau0();
    let order: usize = s.get("order", "32");
    s.require(order >= 4, "order", format!("must be at least 4, got {order}"));
    let seed: u64 = s.get("seed", "0");
    let Flag(timing) = s.get("timing", "true");
    let output = Output { dir: s.get("output.dir", "."), name: s.get("output.name", task.name()), timing };
    let support = problem.support();
    let (centre, rho) = support.unwrap_or((problem_origin(chart), 0.0));

    let job = match task {
        Task::Propagate => {
            let Floats(taus) = s.get("taus", &fmt_list(&[tau0 + 1.0, tau0 + 2.0]));
            for &t in &taus {
                if problem.is_singular() {
                    s.require(t != 0.0, "taus", "values must be non-zero for data posed at tau0 = 0");
                } else {
                    s.require(t > tau0, "taus", format!("value {t} must exceed tau0 = {tau0}"));
                }
            }
            let Triples(coords) = s.get("points", &fmt_triple(centre.coords().into()));
            let xs = points(s, "points", chart, &coords);
            let points = taus.iter().flat_map(|&t| xs.iter().map(move |x| SpacetimePoint::new(t, *x))).collect();
            Job::Propagate { points }
        }
        Task::Decay => {
            let hyperbolic = chart == Curvature::Hyperbolic;
            let variable: DecayVariable = s.get("variable", "tau");
            let model_default = match (hyperbolic, variable) {
                (true, DecayVariable::ConformalTau) => "exponential",
                _ => "power",
            };
            let model: DecayModel = s.get("model", model_default);
            let (lo, hi, count, spacing) =
                if hyperbolic { ("8", "20", "13", "linear") } else { ("20", "200", "16", "geometric") };
            let Real(tau_min) = s.get("tau_min", lo);
            let Real(tau_max) = s.get("tau_max", hi);
            let samples: usize = s.get("samples", count);
            let spacing: String = s.get("spacing", spacing);
            let dirs = directions(s, "24");
            let target = decay_target(chart, model, variable);
            let (expected_default, tolerance_default) = target.unwrap_or((f64::NAN, f64::NAN));
            let Real(expected) = if target.is_some() || s.is_given("expected") {
                s.get("expected", &expected_default.to_string())
            } else {
                s.issue("expected", "no reference value for this curvature, model and variable; set it");
                Real(0.0)
            };
            let Real(tolerance) = if target.is_some() || s.is_given("tolerance") {
                s.get("tolerance", &tolerance_default.to_string())
            } else {
                s.issue("tolerance", "no default for this curvature, model and variable; set it");
                Real(0.0)
            };
            s.require(tolerance > 0.0, "tolerance", "must be positive");
            s.require(samples >= MIN_FIT_SAMPLES, "samples", format!("need at least {MIN_FIT_SAMPLES}"));
            s.require(tau_min > 0.0 && tau_max > tau_min, "tau_max", "need 0 < tau_min < tau_max");
            let taus = match spacing.as_str() {
                "geometric" => geometric_grid(tau_min, tau_max, samples),
                "linear" => linear_grid(tau_min, tau_max, samples),
                other => {
                    s.issue("spacing", format!("expected `geometric` or `linear`, got `{other}`"));
                    Vec::new()
                }
            };
            if !taus.is_empty() && support.is_some() {
                if let Err(e) = check_asymptotic_range(&problem, &taus) {
                    s.issue("tau_min", e.to_string());
                }
            }
            Job::Decay { taus, probes: ShellProbes { directions: dirs, seed }, model, variable, expected, tolerance }
        }
        Task::Huygens => {
            let Real(tau) = s.get("tau", &(tau0 + 10.0 * rho).to_string());
            s.require(tau - tau0 > 2.0 * rho, "tau", format!("tau - tau0 must exceed twice the support radius {rho}"));
            Job::Huygens { tau, directions: directions(s, "24") }
        }
        Task::SingularLimit => {
            s.require(problem.is_singular(), "tau0", "this task needs data posed at tau0 = 0");
            let Real(start) = s.get("start", "0.2");
            let levels: usize = s.get("levels", "7");
            let dirs = directions(s, "8");
            let Floats(fractions) = s.get("fractions", "0,0.3,0.6");
            let Real(tolerance) = s.get("tolerance", "1e-3");
            s.require(start > 0.0, "start", "must be positive");
            s.require(levels >= 2, "levels", "need at least 2");
            s.require(tolerance > 0.0, "tolerance", "must be positive");
            s.require(
                fractions.iter().all(|q| (0.0..1.0).contains(q)),
                "fractions",
                "probe distances are fractions of the support radius in [0, 1)",
            );
            let unit = random_directions(dirs, seed);
            let mut xs = Vec::new();
            for q in fractions {
                if q == 0.0 {
                    xs.push(centre);
                } else {
                    xs.extend(points_at_distance(&centre, &unit, q * rho));
                }
            }
            Job::SingularLimit { xs, taus: halving_sequence(start, levels), tolerance }
        }
        Task::CrossSingularity => {
            s.require(problem.is_singular(), "tau0", "this task needs data posed at tau0 = 0");
            let Triple(p) = s.get("point", &fmt_triple(centre.coords().into()));
            let x = points(s, "point", chart, &[p]).pop().unwrap_or(centre);
            let Real(extent) = s.get("extent", "0.2");
            let levels: usize = s.get("levels", "8");
            s.require(extent > 0.0, "extent", "must be positive");
            s.require(levels >= 2, "levels", "need at least 2");
            Job::CrossSingularity { x, taus: symmetric_halving_grid(extent, levels) }
        }
        Task::OracleCompare => {
            s.require(chart == Curvature::Flat, "curvature", "oracle-compare runs on flat data only");
            let Floats(taus) = s.get("taus", &fmt_list(&[tau0 + 1.0, tau0 + 2.0, tau0 + 3.0]));
            check_commensurate(s, &taus, tau0);
            let n = grid_size(s, "64");
            let stencil: Stencil = s.get("stencil", "second");
            let Floats(radii) = s.get("radii", "1,2,3");
            s.require(radii.iter().all(|r| *r > 0.0), "radii", "must be positive");
            let dirs = directions(s, "4");
            let Triple(axis) = s.get("axis", "1,0,0");
            let Real(tolerance) = s.get("tolerance", "1e-3");
            s.require(tolerance > 0.0, "tolerance", "must be positive");
            Job::OracleCompare {
                config: CompareConfig {
                    taus,
                    probes: sector_probes(&centre, &Vec3::from(axis), &radii, dirs),
                    n,
                    stencil,
                    order,
                },
                tolerance,
            }
        }
        Task::IdentifyPde => {
            s.require(chart == Curvature::Hyperbolic, "curvature", "identify-pde runs on hyperbolic data only");
            let Real(tau) = s.get("tau", &(tau0 + 2.0).to_string());
            s.require(tau > tau0, "tau", format!("must exceed tau0 = {tau0}"));
            let n = grid_size(s, "128");
            let stencil: Stencil = s.get("stencil", "fourth");
            let r = tau - tau0;
            let Floats(radii) = s.get("radii", &fmt_list(&[r - rho / 2.0, r, r + rho / 2.0]));
            s.require(radii.iter().all(|r| *r > 0.0), "radii", "must be positive");
            let dirs = directions(s, "4");
            let Triple(axis) = s.get("axis", "0,0,1");
            Job::IdentifyPde {
                config: IdentifyConfig {
                    tau,
                    probes: sector_probes(&centre, &Vec3::from(axis), &radii, dirs),
                    n,
                    stencil,
                    order,
                },
            }
        }
    };
    s.finish()?;
    Ok(Plan { task, output, problem, order, seed, job })
}

fn problem_origin(chart: Curvature) -> SpatialPoint {
    match chart {
        Curvature::Flat => SpatialPoint::flat(0.0, 0.0, 0.0),
        Curvature::Hyperbolic => SpatialPoint::hyperbolic(0.0, 0.0, 1.0).expect("z > 0"),
    }
}

/// Oracle times must all follow `τ₀` and be whole multiples of the first gap.
fn check_commensurate(s: &mut Settings, taus: &[f64], tau0: f64) {
    let unit = taus.iter().map(|t| t - tau0).fold(f64::INFINITY, f64::min);
    if unit.is_nan() || unit <= 0.0 {
        s.issue("taus", format!("all values must exceed tau0 = {tau0}"));
        return;
    }
    for t in taus {
        let q = (t - tau0) / unit;
        s.require(
            (q - q.round()).abs() <= 1e-9,
            "taus",
            format!("{t} - tau0 is not a whole multiple of the smallest gap {unit}"),
        );
    }
}

fn class_name(c: ProbeClass) -> &'static str {
    match c {
        ProbeClass::InsideCone => "inside",
        ProbeClass::OnShell => "shell",
        ProbeClass::OutsideCone => "outside",
    }
}

/// Shortest round-trip form, in exponent notation away from unit scale.
fn num(v: f64) -> String {
    if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

impl Plan {
    pub fn execute(&self, exec: Execution) -> frwmax_core::Result<Report> {
        let problem = &self.problem;
        match &self.job {
            Job::Propagate { points } => {
                let samples = solve_batch(problem, points, self.order, exec)?;
                let mut rows = Vec::with_capacity(samples.len());
                let (mut max_a, mut max_at) = (0.0f64, 0.0f64);
                for s in &samples {
                    let x = s.point.x.coords();
                    let mut row = vec![num(s.point.tau), num(x.x), num(x.y), num(x.z)];
                    row.extend(s.a.iter().chain(&s.a_tau).map(|v| num(*v)));
                    rows.push(row);
                    max_a = s.a.iter().fold(max_a, |m, v| m.max(v.abs()));
                    max_at = s.a_tau.iter().fold(max_at, |m, v| m.max(v.abs()));
                }
                Ok(Report {
                    header: vec!["tau", "x", "y", "z", "a0", "a1", "a2", "a_tau0", "a_tau1", "a_tau2"],
                    rows,
                    metrics: json!({ "samples": samples.len(), "max_abs_a": max_a, "max_abs_a_tau": max_at }),
                    pass: true,
                })
            }
            Job::Decay { taus, probes, model, variable, expected, tolerance } => {
                let series = decay_series(problem, taus, probes, self.order, exec)?;
                let fit = fit_series(&series, *model, *variable)?;
                let pass = fit.within(*expected, *tolerance);
                Ok(Report {
                    header: vec!["tau", "t", "sup_abs_a"],
                    rows: series.iter().map(|p| vec![num(p.tau), num(p.t), num(p.sup)]).collect(),
                    metrics: json!({
                        "estimate": fit.estimate,
                        "stderr": fit.stderr,
                        "expected": expected,
                        "tolerance": tolerance,
                        "variable": fit.variable,
                        "model": fit.model,
                        "samples_fitted": fit.samples,
                        "tau_range": [fit.tau_range.0, fit.tau_range.1],
                        "probes_per_time": 3 * probes.directions,
                    }),
                    pass,
                })
            }
            Job::Huygens { tau, directions } => {
                let probes = huygens_probes(problem, *tau, *directions, self.seed);
                let map = huygens_map(problem, *tau, &probes, self.order, exec)?;
                let pass = map.off_shell_vanishes() && map.on_shell_visible();
                let rows = map
                    .entries
                    .iter()
                    .map(|e| {
                        vec![
                            num(e.x.x),
                            num(e.x.y),
                            num(e.x.z),
                            e.distance.map_or(String::new(), num),
                            num(e.magnitude),
                            class_name(e.class).to_string(),
                        ]
                    })
                    .collect();
                Ok(Report {
                    header: vec!["x", "y", "z", "distance", "abs_a", "class"],
                    rows,
                    metrics: json!({
                        "tau": map.tau,
                        "shell_radius": map.shell_radius,
                        "support_radius": map.support_radius,
                        "data_scale": map.data_scale,
                        "max_off_shell": map.max_off_shell,
                        "max_on_shell": map.max_on_shell,
                        "off_shell_relative": map.max_off_shell / map.data_scale,
                        "on_shell_relative": map.max_on_shell / map.data_scale,
                        "off_shell_vanishes": map.off_shell_vanishes(),
                        "on_shell_visible": map.on_shell_visible(),
                        "inside": map.count(ProbeClass::InsideCone),
                        "on_shell": map.count(ProbeClass::OnShell),
                        "outside": map.count(ProbeClass::OutsideCone),
                    }),
                    pass,
                })
            }
            Job::SingularLimit { xs, taus, tolerance } => {
                let report = singular_limit_report(problem, xs, taus, self.order, exec)?;
                let monotone =
                    report.rows.windows(2).all(|w| w[1].error_a < w[0].error_a && w[1].error_a_tau < w[0].error_a_tau);
                let (ea, eb) = report.final_errors();
                let reaches = report.reaches(*tolerance);
                Ok(Report {
                    header: vec!["k", "tau", "error_a", "error_a_tau"],
                    rows: report
                        .rows
                        .iter()
                        .enumerate()
                        .map(|(k, r)| vec![k.to_string(), num(r.tau), num(r.error_a), num(r.error_a_tau)])
                        .collect(),
                    metrics: json!({
                        "probes": xs.len(),
                        "final_error_a": ea,
                        "final_error_a_tau": eb,
                        "monotone": monotone,
                        "monotone_tail": report.monotone_tail,
                        "max_tail_ratio": report.max_tail_ratio,
                        "tolerance": tolerance,
                        "reaches_tolerance": reaches,
                    }),
                    pass: monotone && report.converges() && reaches,
                })
            }
            Job::CrossSingularity { x, taus } => {
                let trace = cross_singularity_trace(problem, x, taus, self.order, exec)?;
                let rows = trace
                    .points
                    .iter()
                    .map(|p| {
                        let mut row = vec![num(p.tau)];
                        row.extend(p.a.iter().chain(&p.a_tau).map(|v| num(*v)));
                        row
                    })
                    .collect();
                let levels: Vec<Value> = trace
                    .levels
                    .iter()
                    .map(|l| json!({ "tau": l.tau, "jump": l.jump, "asymmetry": l.asymmetry, "odd_defect": l.odd_defect }))
                    .collect();
                Ok(Report {
                    header: vec!["tau", "a0", "a1", "a2", "a_tau0", "a_tau1", "a_tau2"],
                    rows,
                    metrics: json!({
                        "point": [trace.x.x, trace.x.y, trace.x.z],
                        "levels": levels,
                        "modulus": trace.modulus,
                        "max_halving_ratio": trace.max_halving_ratio,
                        "within_modulus": trace.within_modulus(),
                        "max_odd_defect": trace.max_odd_defect(),
                    }),
                    pass: trace.continuous(),
                })
            }
            Job::OracleCompare { config, tolerance } => {
                let cmp = compare_flat(problem, config, exec)?;
                let worst = cmp.max_rel_linf();
                Ok(Report {
                    header: vec!["tau", "rel_linf", "max_abs_error", "max_abs_reference"],
                    rows: cmp
                        .times
                        .iter()
                        .map(|t| vec![num(t.tau), num(t.rel_linf), num(t.max_abs_error), num(t.max_reference)])
                        .collect(),
                    metrics: json!({
                        "max_rel_linf": worst,
                        "tolerance": tolerance,
                        "n": cmp.spec.n,
                        "dx": cmp.spec.dx,
                        "dt": cmp.spec.dt,
                        "probes": cmp.probes.len(),
                    }),
                    pass: worst <= *tolerance,
                })
            }
            Job::IdentifyPde { config } => {
                let report = identify_hyperbolic_pde(problem, config, exec)?;
                let decisive = matches!(report.verdict, PdeVerdict::Shifted | PdeVerdict::Unshifted);
                let spec = report.spec;
                Ok(Report {
                    header: vec!["mass_shift", "rel_linf_distance"],
                    rows: vec![
                        vec!["0".into(), num(report.distance_unshifted)],
                        vec!["1".into(), num(report.distance_shifted)],
                    ],
                    metrics: json!({
                        "tau": report.tau,
                        "distance_unshifted": report.distance_unshifted,
                        "distance_shifted": report.distance_shifted,
                        "verdict": report.verdict,
                        "mass_shift": report.verdict.mass_shift(),
                        "probes": report.probes,
                        "n": spec.map(|s| s.n),
                        "dx": spec.map(|s| s.dx),
                        "dt": spec.map(|s| s.dt),
                    }),
                    pass: decisive,
                })
            }
        }
    }
}
