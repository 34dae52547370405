//! Empirical checks of the qualitative theorems: decay rates, sharp Huygens
//! support, the limit at the singular slice and continuity across it.
//!
//! Suprema over space are approximated by maxima over probes placed on
//! geodesic shells about the data centre. For a single bump the solution
//! lives in the shell `|d − (τ − τ₀)| ≤ ρ`, so shell probes see its peak.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::data_norms;
use crate::geometry::{self, Curvature, Direction, SpatialPoint, Vec3};
use crate::propagator::{self, CauchyProblem, SpacetimePoint};
use crate::timeframe::{tau_to_t, ConformalTime};

/// Fewest samples a decay fit accepts.
pub const MIN_FIT_SAMPLES: usize = 5;
/// Sup values below this are treated as round-off and dropped from fits.
pub const NOISE_FLOOR: f64 = 1e-13;
/// `τ_min ≥ ASYMPTOTIC_FACTOR · (ρ + τ₀)` for decay fits.
pub const ASYMPTOTIC_FACTOR: f64 = 5.0;
/// Off-shell values must stay below this multiple of the data scale.
pub const OFF_SHELL_TOLERANCE: f64 = 1e-9;
/// The largest on-shell value must exceed this multiple of the data scale.
pub const ON_SHELL_FLOOR: f64 = 1e-6;
/// Largest accepted error ratio per halving of `τ`.
pub const HALVING_RATIO: f64 = 0.75;
/// Number of trailing entries of a singular-limit table that must decrease.
pub const MONOTONE_TAIL: usize = 4;
/// Points per axis for the data-norm sampling behind `C_data`.
pub const NORM_RESOLUTION: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayVariable {
    ConformalTau,
    CosmologicalT,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `sup|A| ~ s^p`; the estimate is `p`.
    PowerLaw,
    /// `sup|A| ~ e^{λ s}`; the estimate is `λ`.
    Exponential,
}

impl std::str::FromStr for DecayVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tau" | "conformal_tau" => Ok(DecayVariable::ConformalTau),
            "t" | "cosmological_t" => Ok(DecayVariable::CosmologicalT),
            other => Err(Error::invalid("variable", format!("expected `tau` or `t`, got `{other}`"))),
        }
    }
}

impl std::str::FromStr for DecayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "power" | "power_law" => Ok(DecayModel::PowerLaw),
            "exp" | "exponential" => Ok(DecayModel::Exponential),
            other => Err(Error::invalid("model", format!("expected `power` or `exponential`, got `{other}`"))),
        }
    }
}

/// Straight-line least squares `y ≈ a + b x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope from the residual variance.
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("samples", "abscissae and ordinates differ in length"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("samples", format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("samples", "abscissae are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { intercept, slope, slope_stderr })
}

/// Probe layout on geodesic shells about the data centre: `directions`
/// seeded uniform directions at each of three radii
/// `(τ − τ₀) + {−ρ/2, 0, ρ/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShellProbes {
    pub directions: usize,
    pub seed: u64,
}

impl Default for ShellProbes {
    fn default() -> Self {
        ShellProbes { directions: 24, seed: 0 }
    }
}

/// Seeded directions uniform on the unit sphere.
pub fn random_directions(count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - u * u).sqrt();
            Vec3::new(s * phi.cos(), s * phi.sin(), u)
        })
        .collect()
}

/// Points at geodesic distance `s` from `center` along each direction.
pub fn points_at_distance(center: &SpatialPoint, directions: &[Vec3], s: f64) -> Vec<SpatialPoint> {
    let chart = center.chart();
    directions
        .iter()
        .filter_map(|v| Direction::new(*v))
        .map(|dir| SpatialPoint::raw(chart, geometry::exp_map(chart, &center.coords(), &dir, s).0))
        .collect()
}

impl ShellProbes {
    pub fn at(&self, problem: &CauchyProblem, tau: f64) -> Vec<SpatialPoint> {
        let Some((c, rho)) = problem.support() else {
            return Vec::new();
        };
        let dirs = random_directions(self.directions, self.seed);
        let r = tau - problem.tau0();
        [r - 0.5 * rho, r, r + 0.5 * rho]
            .into_iter()
            .filter(|s| *s >= 0.0)
            .flat_map(|s| points_at_distance(&c, &dirs, s))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub tau: f64,
    pub t: f64,
    /// max over probes of `|A(τ, x)|`.
    pub sup: f64,
}

/// `sup|A|` along `taus` over shell probes.
pub fn decay_series(
    problem: &CauchyProblem,
    taus: &[f64],
    probes: &ShellProbes,
    order: usize,
    exec: Execution,
) -> Result<Vec<DecaySample>> {
    let mut points = Vec::new();
    let mut owners = Vec::new();
    for (k, &tau) in taus.iter().enumerate() {
        for x in probes.at(problem, tau) {
            points.push(SpacetimePoint::new(tau, x));
            owners.push(k);
        }
    }
    let values = propagator::potential_batch(problem, &points, order, exec)?;
    let mut sup = vec![0.0f64; taus.len()];
    for (k, a) in owners.into_iter().zip(values) {
        sup[k] = sup[k].max(Vec3::from(a).norm());
    }
    Ok(taus
        .iter()
        .zip(sup)
        .map(|(&tau, sup)| DecaySample { tau, t: tau_to_t(ConformalTime::new(tau, problem.curvature())), sup })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub variable: DecayVariable,
    pub model: DecayModel,
    pub estimate: f64,
    pub stderr: f64,
    pub tau_range: (f64, f64),
    /// Points that survived the noise floor.
    pub samples: usize,
}

impl DecayFit {
    pub fn within(&self, target: f64, tolerance: f64) -> bool {
        (self.estimate - target).abs() <= tolerance
    }
}

/// Checks that `taus` starts in the asymptotic regime of `problem`.
pub fn check_asymptotic_range(problem: &CauchyProblem, taus: &[f64]) -> Result<()> {
    if taus.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid("taus", format!("need at least {MIN_FIT_SAMPLES} values, got {}", taus.len())));
    }
    let rho = problem.support().map_or(0.0, |(_, rho)| rho);
    let floor = ASYMPTOTIC_FACTOR * (rho + problem.tau0());
    let tau_min = taus.iter().copied().fold(f64::INFINITY, f64::min);
    if !(tau_min >= floor) {
        return Err(Error::invalid(
            "taus",
            format!("smallest value {tau_min} lies below the asymptotic floor {floor}"),
        ));
    }
    Ok(())
}

/// Regression of `log sup|A|` against `log s` (power law) or `s`
/// (exponential), with `s = τ` or `s = t(τ)`.
pub fn fit_series(series: &[DecaySample], model: DecayModel, variable: DecayVariable) -> Result<DecayFit> {
    let kept: Vec<&DecaySample> = series.iter().filter(|s| s.sup >= NOISE_FLOOR).collect();
    if kept.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(
            "taus",
            format!("{} of {} points lie above the noise floor, need {MIN_FIT_SAMPLES}", kept.len(), series.len()),
        ));
    }
    let abscissa = |s: &DecaySample| {
        let v = match variable {
            DecayVariable::ConformalTau => s.tau,
            DecayVariable::CosmologicalT => s.t,
        };
        match model {
            DecayModel::PowerLaw => v.ln(),
            DecayModel::Exponential => v,
        }
    };
    let xs: Vec<f64> = kept.iter().map(|s| abscissa(s)).collect();
    let ys: Vec<f64> = kept.iter().map(|s| s.sup.ln()).collect();
    let line = fit_line(&xs, &ys)?;
    let lo = kept.iter().map(|s| s.tau).fold(f64::INFINITY, f64::min);
    let hi = kept.iter().map(|s| s.tau).fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit {
        variable,
        model,
        estimate: line.slope,
        stderr: line.slope_stderr,
        tau_range: (lo, hi),
        samples: kept.len(),
    })
}

pub fn fit_decay(
    problem: &CauchyProblem,
    taus: &[f64],
    probes: &ShellProbes,
    model: DecayModel,
    variable: DecayVariable,
    order: usize,
    exec: Execution,
) -> Result<DecayFit> {
    check_asymptotic_range(problem, taus)?;
    let series = decay_series(problem, taus, probes, order, exec)?;
    fit_series(&series, model, variable)
}

/// `count` points geometrically spaced on `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (ratio * k as f64).exp()).collect()
}

/// `count` points evenly spaced on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeClass {
    InsideCone,
    OnShell,
    OutsideCone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub x: Vec3,
    /// Geodesic distance to the data centre; `None` for zero data.
    pub distance: Option<f64>,
    pub magnitude: f64,
    pub class: ProbeClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMap {
    pub tau: f64,
    /// `τ − τ₀`.
    pub shell_radius: f64,
    /// Geodesic radius of the data support.
    pub support_radius: f64,
    /// `C_data`, the scale the thresholds refer to.
    pub data_scale: f64,
    pub entries: Vec<SupportEntry>,
    pub max_off_shell: f64,
    pub max_on_shell: f64,
}

impl SupportMap {
    pub fn off_shell_vanishes(&self) -> bool {
        self.max_off_shell <= OFF_SHELL_TOLERANCE * self.data_scale
    }

    pub fn on_shell_visible(&self) -> bool {
        self.max_on_shell >= ON_SHELL_FLOOR * self.data_scale
    }

    pub fn count(&self, class: ProbeClass) -> usize {
        self.entries.iter().filter(|e| e.class == class).count()
    }
}

fn classify(d: f64, shell: f64, rho: f64) -> ProbeClass {
    if d > shell + rho {
        ProbeClass::OutsideCone
    } else if d < shell - rho {
        ProbeClass::InsideCone
    } else {
        ProbeClass::OnShell
    }
}

/// Probes for [`huygens_map`]: seeded directions at the centre, at distances
/// spread through the interior of the cone, across the shell, and outside.
pub fn huygens_probes(problem: &CauchyProblem, tau: f64, directions: usize, seed: u64) -> Vec<SpatialPoint> {
    let Some((c, rho)) = problem.support() else {
        return Vec::new();
    };
    let r = tau - problem.tau0();
    let dirs = random_directions(directions, seed);
    let inner = (r - rho).max(0.0);
    let mut out = vec![c];
    for s in [0.25 * inner, 0.5 * inner, 0.99 * inner, r - 0.5 * rho, r, r + 0.5 * rho, r + rho * 1.01, 1.5 * r + rho] {
        if s > 0.0 {
            out.extend(points_at_distance(&c, &dirs, s));
        }
    }
    out
}

pub fn huygens_map(
    problem: &CauchyProblem,
    tau: f64,
    probes: &[SpatialPoint],
    order: usize,
    exec: Execution,
) -> Result<SupportMap> {
    let shell = tau - problem.tau0();
    if !(shell > 0.0) {
        return Err(Error::invalid("tau", format!("must exceed tau0 = {}, got {tau}", problem.tau0())));
    }
    let support = problem.support();
    let rho = support.map_or(0.0, |(_, rho)| rho);
    if support.is_some() && !(shell > 2.0 * rho) {
        return Err(Error::invalid(
            "tau",
            format!("τ − τ₀ = {shell} must exceed twice the support radius {rho} to separate the regions"),
        ));
    }
    let points: Vec<SpacetimePoint> = probes.iter().map(|x| SpacetimePoint::new(tau, *x)).collect();
    let values = propagator::potential_batch(problem, &points, order, exec)?;
    let mut entries = Vec::with_capacity(probes.len());
    for (x, a) in probes.iter().zip(values) {
        geometry::ensure_chart(problem.curvature(), x.chart())?;
        let distance = support.map(|(c, _)| geometry::distance(problem.curvature(), &c.coords(), &x.coords()));
        let class = distance.map_or(ProbeClass::OutsideCone, |d| classify(d, shell, rho));
        entries.push(SupportEntry { x: x.coords(), distance, magnitude: Vec3::from(a).norm(), class });
    }
    let max_of = |on: bool| {
        entries.iter().filter(|e| (e.class == ProbeClass::OnShell) == on).map(|e| e.magnitude).fold(0.0, f64::max)
    };
    let data_scale = data_norms(problem.f(), problem.g(), NORM_RESOLUTION)?.scale();
    Ok(SupportMap {
        tau,
        shell_radius: shell,
        support_radius: rho,
        data_scale,
        max_off_shell: max_of(false),
        max_on_shell: max_of(true),
        entries,
    })
}

/// `0.2 · 2^(−k)` for `k < levels`.
pub fn halving_sequence(start: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| start * 0.5f64.powi(k as i32)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub tau: f64,
    /// max over probes of `|A(τ, x) − f(x)|`.
    pub error_a: f64,
    /// max over probes of `|∂_τA(τ, x) − g(x)|`.
    pub error_a_tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularLimitReport {
    pub curvature: Curvature,
    pub rows: Vec<LimitRow>,
    /// Whether both columns strictly decrease over the last entries.
    pub monotone_tail: bool,
    /// Largest ratio of consecutive errors over the tail, both columns.
    pub max_tail_ratio: f64,
}

impl SingularLimitReport {
    pub fn final_errors(&self) -> (f64, f64) {
        self.rows.last().map_or((0.0, 0.0), |r| (r.error_a, r.error_a_tau))
    }

    pub fn converges(&self) -> bool {
        self.monotone_tail && self.max_tail_ratio <= HALVING_RATIO
    }

    pub fn reaches(&self, tolerance: f64) -> bool {
        let (a, b) = self.final_errors();
        a < tolerance && b < tolerance
    }
}

/// Ratios of consecutive entries, skipping pairs that are both exactly zero
/// (data that never reaches the probes).
fn tail_ratios(column: &[f64]) -> (bool, f64) {
    let mut monotone = true;
    let mut worst = 0.0f64;
    for w in column.windows(2) {
        if w[0] == 0.0 && w[1] == 0.0 {
            continue;
        }
        if !(w[1] < w[0]) {
            monotone = false;
        }
        worst = worst.max(if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY });
    }
    (monotone, worst)
}

pub fn singular_limit_report(
    problem: &CauchyProblem,
    xs: &[SpatialPoint],
    taus: &[f64],
    order: usize,
    exec: Execution,
) -> Result<SingularLimitReport> {
    if !problem.is_singular() {
        return Err(Error::invalid("tau0", format!("must be 0, got {}", problem.tau0())));
    }
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) || taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("taus", "must be positive and strictly decreasing"));
    }
    if xs.is_empty() {
        return Err(Error::invalid("probes", "need at least one point"));
    }
    let limits = xs.iter().map(|x| propagator::limit_at_singularity(problem, x)).collect::<Result<Vec<_>>>()?;
    let points: Vec<SpacetimePoint> =
        taus.iter().flat_map(|&tau| xs.iter().map(move |x| SpacetimePoint::new(tau, *x))).collect();
    let samples = propagator::solve_batch(problem, &points, order, exec)?;
    let rows: Vec<LimitRow> = taus
        .iter()
        .zip(samples.chunks(xs.len()))
        .map(|(&tau, chunk)| {
            let mut row = LimitRow { tau, error_a: 0.0, error_a_tau: 0.0 };
            for (s, (f, g)) in chunk.iter().zip(&limits) {
                row.error_a = row.error_a.max((Vec3::from(s.a) - Vec3::from(*f)).norm());
                row.error_a_tau = row.error_a_tau.max((Vec3::from(s.a_tau) - Vec3::from(*g)).norm());
            }
            row
        })
        .collect();
    let tail = &rows[rows.len().saturating_sub(MONOTONE_TAIL)..];
    let (mono_a, ratio_a) = tail_ratios(&tail.iter().map(|r| r.error_a).collect::<Vec<_>>());
    let (mono_b, ratio_b) = tail_ratios(&tail.iter().map(|r| r.error_a_tau).collect::<Vec<_>>());
    Ok(SingularLimitReport {
        curvature: problem.curvature(),
        rows,
        monotone_tail: mono_a && mono_b,
        max_tail_ratio: ratio_a.max(ratio_b),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub tau: f64,
    pub a: [f64; 3],
    pub a_tau: [f64; 3],
}

/// Values at `±τ` and the jump estimate they give at `τ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpLevel {
    pub tau: f64,
    /// `max(|A(τ) − f(x)|, |A(−τ) − f(x)|)`.
    pub jump: f64,
    /// `|A(τ) − A(−τ)|`.
    pub asymmetry: f64,
    /// `|A(τ) + A(−τ)|`, which vanishes when `f ≡ 0`.
    pub odd_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSingularityTrace {
    pub x: Vec3,
    /// Samples ordered by `τ`, including the spliced value at `τ = 0`.
    pub points: Vec<TracePoint>,
    pub levels: Vec<JumpLevel>,
    /// Lipschitz estimate `max |∂_τA|` over the sampled trace.
    pub modulus: f64,
    /// Largest jump ratio over consecutive halvings of `|τ|`.
    pub max_halving_ratio: f64,
}

impl CrossSingularityTrace {
    /// Every jump stays below the modulus of continuity `C |τ|`.
    pub fn within_modulus(&self) -> bool {
        self.levels.iter().all(|l| l.jump <= self.modulus * l.tau * (1.0 + 1e-9) + f64::EPSILON)
    }

    pub fn continuous(&self) -> bool {
        self.within_modulus() && self.max_halving_ratio <= HALVING_RATIO
    }

    /// Largest `|A(τ) + A(−τ)|`; zero up to round-off when `f ≡ 0`.
    pub fn max_odd_defect(&self) -> f64 {
        self.levels.iter().map(|l| l.odd_defect).fold(0.0, f64::max)
    }
}

/// `±T · 2^(−k)` for `k < levels`, sorted.
pub fn symmetric_halving_grid(extent: f64, levels: usize) -> Vec<f64> {
    let mut out: Vec<f64> = halving_sequence(extent, levels).into_iter().flat_map(|t| [-t, t]).collect();
    out.sort_by(f64::total_cmp);
    out
}

pub fn cross_singularity_trace(
    problem: &CauchyProblem,
    x: &SpatialPoint,
    taus: &[f64],
    order: usize,
    exec: Execution,
) -> Result<CrossSingularityTrace> {
    if !problem.is_singular() {
        return Err(Error::invalid("tau0", format!("must be 0, got {}", problem.tau0())));
    }
    if taus.iter().any(|t| *t == 0.0 || !t.is_finite()) {
        return Err(Error::invalid("taus", "must be finite and exclude 0"));
    }
    if !taus.iter().any(|t| *t < 0.0) || !taus.iter().any(|t| *t > 0.0) {
        return Err(Error::invalid("taus", "must contain values on both sides of 0"));
    }
    let (f, g) = propagator::limit_at_singularity(problem, x)?;
    let points: Vec<SpacetimePoint> = taus.iter().map(|&t| SpacetimePoint::new(t, *x)).collect();
    let samples = propagator::solve_batch(problem, &points, order, exec)?;
    let mut trace: Vec<TracePoint> =
        samples.iter().map(|s| TracePoint { tau: s.point.tau, a: s.a, a_tau: s.a_tau }).collect();
    let modulus = trace.iter().map(|p| Vec3::from(p.a_tau).norm()).fold(0.0, f64::max);
    trace.push(TracePoint { tau: 0.0, a: f, a_tau: g });
    trace.sort_by(|p, q| p.tau.total_cmp(&q.tau));

    let fv = Vec3::from(f);
    let at = |tau: f64| trace.iter().find(|p| p.tau == tau).map(|p| Vec3::from(p.a));
    let mut magnitudes: Vec<f64> = taus.iter().filter(|t| **t > 0.0).copied().collect();
    magnitudes.sort_by(|a, b| b.total_cmp(a));
    magnitudes.dedup();
    let levels: Vec<JumpLevel> = magnitudes
        .into_iter()
        .filter_map(|t| {
            let (plus, minus) = (at(t)?, at(-t)?);
            Some(JumpLevel {
                tau: t,
                jump: (plus - fv).norm().max((minus - fv).norm()),
                asymmetry: (plus - minus).norm(),
                odd_defect: (plus + minus).norm(),
            })
        })
        .collect();
    let mut worst = 0.0f64;
    for w in levels.windows(2) {
        let halving = (w[1].tau / w[0].tau - 0.5).abs() < 1e-12;
        if !halving || (w[0].jump == 0.0 && w[1].jump == 0.0) {
            continue;
        }
        worst = worst.max(if w[0].jump > 0.0 { w[1].jump / w[0].jump } else { f64::INFINITY });
    }
    Ok(CrossSingularityTrace { x: x.coords(), points: trace, levels, modulus, max_halving_ratio: worst })
}

/// `∂²_τA − (L + m)A` at `point` from second-order central differences of
/// step `h` in `τ` and in each chart coordinate, `L` being the flat
/// Laplacian or `z²Δ − z∂_z`. Max norm over components.
pub fn pde_residual(
    problem: &CauchyProblem,
    point: &SpacetimePoint,
    h: f64,
    mass_shift: f64,
    order: usize,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", format!("must be positive, got {h}")));
    }
    let chart = problem.curvature();
    let p = point.x.coords();
    let at = |tau: f64, q: Vec3| -> Result<Vec3> {
        let x = SpatialPoint::new(chart, q)?;
        Ok(Vec3::from(propagator::potential(problem, &SpacetimePoint::new(tau, x), order)?))
    };
    let centre = at(point.tau, p)?;
    let dtt = (at(point.tau + h, p)? - centre * 2.0 + at(point.tau - h, p)?) / (h * h);
    let mut lap = Vec3::zeros();
    let mut dz = Vec3::zeros();
    for axis in 0..3 {
        let mut e = Vec3::zeros();
        e[axis] = h;
        let (up, down) = (at(point.tau, p + e)?, at(point.tau, p - e)?);
        lap += (up - centre * 2.0 + down) / (h * h);
        if axis == 2 {
            dz = (up - down) / (2.0 * h);
        }
    }
    let op = match chart {
        Curvature::Flat => lap,
        Curvature::Hyperbolic => lap * (p.z * p.z) - dz * p.z,
    };
    Ok((dtt - op - centre * mass_shift).amax())
}
