//! Runs of the grid solver against the closed-form propagator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{advance_to, max_stable_dt, GridSpec, GridState, Stencil};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{self, Curvature, Direction, SpatialPoint, Vec3};
use crate::propagator::{potential_batch, CauchyProblem, SpacetimePoint};

/// Distances a matching run must reach, and a rejected run must exceed.
pub const MATCH_TOLERANCE: f64 = 1e-2;
pub const REJECT_THRESHOLD: f64 = 1e-1;

/// Half-angle of the cone of probe directions used by [`sector_probes`].
const SECTOR_HALF_ANGLE: f64 = 25.0 * PI / 180.0;

/// Probes at geodesic distance `radii` from `center`, along `directions`
/// unit tangents spread on a cone about `axis` (a Euclidean direction at
/// `center`). Keeping the probes in one sector keeps the grid box, and hence
/// `dx`, small.
pub fn sector_probes(center: &SpatialPoint, axis: &Vec3, radii: &[f64], directions: usize) -> Vec<SpatialPoint> {
    let chart = center.chart();
    let axis = axis.try_normalize(0.0).unwrap_or_else(Vec3::x);
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    let mut out = Vec::with_capacity(radii.len() * directions.max(1));
    for &s in radii {
        for j in 0..directions.max(1) {
            let phi = 2.0 * PI * j as f64 / directions.max(1) as f64;
            let (sa, ca) = SECTOR_HALF_ANGLE.sin_cos();
            let eta = axis * ca + (e1 * phi.cos() + e2 * phi.sin()) * sa;
            let dir = Direction::new(eta).expect("unit vector");
            let (p, _) = geometry::exp_map(chart, &center.coords(), &dir, s);
            out.push(SpatialPoint::raw(chart, p));
        }
    }
    out
}

/// Bounding box of every point whose boundary value could reach one of the
/// probes by `τ₀ + horizon`: points `q` with `d(c, q) − ρ + d(q, p) ≤ horizon`
/// for the support ball `(c, ρ)`. A box containing this set leaves the
/// probes inside the exact domain of dependence of the free-space problem.
fn influence_box(problem: &CauchyProblem, probes: &[SpatialPoint], horizon: f64) -> Option<(Vec3, Vec3)> {
    let chart = problem.curvature();
    let (c, rho) = problem.support()?;
    let c = c.coords();
    let budget = horizon + rho;
    let (mut lo, mut hi) = (c, c);
    let mut include = |p: &Vec3| {
        lo = lo.inf(p);
        hi = hi.sup(p);
    };
    for (ec, er) in problem.f().support_ball().into_iter().chain(problem.g().support_ball()) {
        include(&(ec - Vec3::repeat(er)));
        include(&(ec + Vec3::repeat(er)));
    }
    let (n_theta, n_phi) = (48, 96);
    for p in probes {
        let p = p.coords();
        include(&p);
        if geometry::distance(chart, &c, &p) >= budget {
            continue;
        }
        for a in 0..n_theta {
            let u = -1.0 + 2.0 * (a as f64 + 0.5) / n_theta as f64;
            let s = (1.0 - u * u).sqrt();
            for b in 0..n_phi {
                let phi = 2.0 * PI * b as f64 / n_phi as f64;
                let dir = Direction::new(Vec3::new(s * phi.cos(), s * phi.sin(), u)).expect("unit vector");
                // t + d(exp_c(t η), p) is non-decreasing in t.
                let reach = |t: f64| {
                    let (q, _) = geometry::exp_map(chart, &c, &dir, t);
                    t + geometry::distance(chart, &q, &p)
                };
                let (mut t_lo, mut t_hi) = (0.0, budget);
                for _ in 0..60 {
                    let mid = 0.5 * (t_lo + t_hi);
                    if reach(mid) <= budget {
                        t_lo = mid;
                    } else {
                        t_hi = mid;
                    }
                }
                include(&geometry::exp_map(chart, &c, &dir, t_hi).0);
            }
        }
    }
    Some((lo, hi))
}

/// Cube of `n³` nodes around the influence box of `probes` up to `horizon`,
/// with a time step dividing `unit`.
pub(crate) fn covering_spec(
    problem: &CauchyProblem,
    probes: &[SpatialPoint],
    horizon: f64,
    unit: f64,
    n: usize,
    mass_shift: f64,
    stencil: Stencil,
) -> Result<GridSpec> {
    let chart = problem.curvature();
    let (lo, hi) = influence_box(problem, probes, horizon)
        .ok_or_else(|| Error::invalid("data", "zero data has no influence region"))?;
    // The sampled boundary can miss extremes between directions; pad by 5%
    // and keep two cells clear of the Dirichlet faces.
    let extent = (hi - lo).max() * 1.05;
    let cells = n.saturating_sub(5).max(1) as f64;
    let dx = extent / cells;
    let side = dx * (n - 1) as f64;
    let mid = (lo + hi) * 0.5;
    let mut lower = mid - Vec3::repeat(0.5 * side);
    if chart == Curvature::Hyperbolic {
        let pad = (2.0 * dx + 0.025 * (hi.z - lo.z)).min(0.5 * lo.z);
        lower.z = lo.z - pad;
    }
    let dt = max_stable_dt(chart, dx, lower.z + side, stencil);
    GridSpec::new(chart, lower, n, dx, dt, mass_shift, stencil)?.with_step_dividing(unit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Absolute conformal times, each greater than `τ₀`.
    pub taus: Vec<f64>,
    pub probes: Vec<SpatialPoint>,
    pub n: usize,
    pub stencil: Stencil,
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeComparison {
    pub tau: f64,
    /// max |grid − formula| / max |formula| over probes and components.
    pub rel_linf: f64,
    pub max_abs_error: f64,
    pub max_reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub spec: GridSpec,
    /// Probe locations after snapping to grid nodes.
    pub probes: Vec<Vec3>,
    pub times: Vec<TimeComparison>,
}

impl OracleComparison {
    pub fn max_rel_linf(&self) -> f64 {
        self.times.iter().map(|t| t.rel_linf).fold(0.0, f64::max)
    }
}

fn validate_times(problem: &CauchyProblem, taus: &[f64]) -> Result<f64> {
    if taus.is_empty() {
        return Err(Error::invalid("taus", "need at least one comparison time"));
    }
    let tau0 = problem.tau0();
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    if !(sorted[0] > tau0) {
        return Err(Error::invalid("taus", format!("all times must exceed tau0 = {tau0}")));
    }
    // Every interval must be a whole multiple of the shortest one, so one time
    // step lands on all of them.
    let unit = sorted[0] - tau0;
    for t in &sorted {
        let q = (t - tau0) / unit;
        if (q - q.round()).abs() > 1e-9 {
            return Err(Error::invalid("taus", format!("{t} − tau0 is not a multiple of {unit}")));
        }
    }
    Ok(unit)
}

/// Snaps probes to grid nodes, dropping duplicates and points off the grid.
fn snap(spec: &GridSpec, probes: &[SpatialPoint]) -> Vec<(usize, usize, usize)> {
    let mut nodes = Vec::with_capacity(probes.len());
    for p in probes {
        if let Some(ijk) = spec.nearest_node(&p.coords()) {
            if !nodes.contains(&ijk) {
                nodes.push(ijk);
            }
        }
    }
    nodes
}

fn run_and_compare(
    problem: &CauchyProblem,
    spec: &GridSpec,
    probes: &[SpatialPoint],
    taus: &[f64],
    order: usize,
    exec: Execution,
) -> Result<OracleComparison> {
    let nodes = snap(spec, probes);
    if nodes.is_empty() {
        return Err(Error::invalid("probes", "no probe lies inside the grid"));
    }
    let chart = problem.curvature();
    let points: Vec<SpatialPoint> =
        nodes.iter().map(|&(i, j, k)| SpatialPoint::new(chart, spec.node(i, j, k))).collect::<Result<_>>()?;

    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut state = GridState::from_data(spec, problem.f(), problem.g(), problem.tau0(), exec)?;
    let mut times = Vec::with_capacity(sorted.len());
    for &tau in &sorted {
        advance_to(&mut state, spec, tau, exec)?;
        let query: Vec<SpacetimePoint> = points.iter().map(|x| SpacetimePoint::new(tau, *x)).collect();
        let reference = potential_batch(problem, &query, order, exec)?;
        let (mut err, mut size) = (0.0f64, 0.0f64);
        for (&(i, j, k), r) in nodes.iter().zip(&reference) {
            let grid = state.at_node(spec, i, j, k);
            let r = Vec3::from(*r);
            err = err.max((grid - r).amax());
            size = size.max(r.amax());
        }
        let rel_linf = if size > 0.0 {
            err / size
        } else if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        times.push(TimeComparison { tau, rel_linf, max_abs_error: err, max_reference: size });
    }
    Ok(OracleComparison { spec: *spec, probes: nodes.iter().map(|&(i, j, k)| spec.node(i, j, k)).collect(), times })
}

/// Runs the flat grid solver and compares it with the closed-form solution
/// at the probes for each requested time.
pub fn compare_flat(problem: &CauchyProblem, config: &CompareConfig, exec: Execution) -> Result<OracleComparison> {
    geometry::ensure_chart(Curvature::Flat, problem.curvature())?;
    let unit = validate_times(problem, &config.taus)?;
    let horizon = config.taus.iter().cloned().fold(f64::MIN, f64::max) - problem.tau0();
    let spec = covering_spec(problem, &config.probes, horizon, unit, config.n, 0.0, config.stencil)?;
    run_and_compare(problem, &spec, &config.probes, &config.taus, config.order, exec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub tau: f64,
    pub probes: Vec<SpatialPoint>,
    pub n: usize,
    pub stencil: Stencil,
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeVerdict {
    /// The formula solves `∂²_τA = L A`.
    Unshifted,
    /// The formula solves `∂²_τA = (L + 1) A`.
    Shifted,
    Inconclusive,
    /// Zero data: both runs agree with the formula trivially.
    Degenerate,
}

impl PdeVerdict {
    pub fn mass_shift(self) -> Option<f64> {
        match self {
            PdeVerdict::Unshifted => Some(0.0),
            PdeVerdict::Shifted => Some(1.0),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeReport {
    pub curvature: Curvature,
    pub tau: f64,
    /// Relative L∞ distance between the formula and the `m = 0` run.
    pub distance_unshifted: f64,
    /// Relative L∞ distance between the formula and the `m = 1` run.
    pub distance_shifted: f64,
    pub verdict: PdeVerdict,
    pub spec: Option<GridSpec>,
    pub probes: usize,
}

pub(crate) fn verdict(unshifted: f64, shifted: f64) -> PdeVerdict {
    if unshifted <= MATCH_TOLERANCE && shifted >= REJECT_THRESHOLD {
        PdeVerdict::Unshifted
    } else if shifted <= MATCH_TOLERANCE && unshifted >= REJECT_THRESHOLD {
        PdeVerdict::Shifted
    } else {
        PdeVerdict::Inconclusive
    }
}

/// Runs the grid solver with mass shift 0 and 1 from the same data and
/// reports which run the closed-form solution follows.
pub fn identify_hyperbolic_pde(problem: &CauchyProblem, config: &IdentifyConfig, exec: Execution) -> Result<PdeReport> {
    let unit = validate_times(problem, &[config.tau])?;
    if problem.f().is_zero() && problem.g().is_zero() {
        return Ok(PdeReport {
            curvature: problem.curvature(),
            tau: config.tau,
            distance_unshifted: 0.0,
            distance_shifted: 0.0,
            verdict: PdeVerdict::Degenerate,
            spec: None,
            probes: config.probes.len(),
        });
    }
    let run = |shift: f64| -> Result<OracleComparison> {
        let spec = covering_spec(problem, &config.probes, unit, unit, config.n, shift, config.stencil)?;
        run_and_compare(problem, &spec, &config.probes, &[config.tau], config.order, exec)
    };
    let plain = run(0.0)?;
    let shifted = run(1.0)?;
    let (d0, d1) = (plain.max_rel_linf(), shifted.max_rel_linf());
    Ok(PdeReport {
        curvature: problem.curvature(),
        tau: config.tau,
        distance_unshifted: d0,
        distance_shifted: d1,
        verdict: verdict(d0, d1),
        spec: Some(plain.spec),
        probes: plain.probes.len(),
    })
}
