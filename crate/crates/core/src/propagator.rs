//! Closed-form solution operators built from spherical means.
//!
//! With `r = τ − τ₀`, `M` the mean of data over the geodesic sphere `S_r(x)`
//! and `M'` its derivative in `r`:
//!
//! * flat: `A = ∂_r(r M_f) + r M_g = M_f + r M'_f + r M_g`,
//! * hyperbolic: `A = ∂_r(sinh r M_f) + sinh r M_g = cosh r M_f + sinh r M'_f + sinh r M_g`.
//!
//! `M'_f` is the mean of the *outward* radial derivative of `f`, that is
//! minus the mean of [`geometry::radial_derivative`]. The time derivatives
//! are the `r`-derivatives of the same expressions. Since `M(r)` is the
//! average of `f` along the unit-speed geodesics leaving `x`, `M''_f` is the
//! mean of `Hess f(γ', γ') + ∇f · γ''` and needs no differencing.
//!
//! Both formulas are smooth in a signed `r`, with `M` even and `M'` odd, which
//! gives data posed at `τ₀ = 0` a meaning for `τ < 0` as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::{SupportGroup, VectorField};
use crate::geometry::{self, ensure_chart, Curvature, SpatialPoint, SphereQuadrature, Vec3};

/// Radii below this use `A ≈ f + r g` instead of the quadrature formula.
pub const NEAR_ZERO_RADIUS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct CauchyProblem {
    curvature: Curvature,
    f: VectorField,
    g: VectorField,
    tau0: f64,
    f_support: Option<(SpatialPoint, f64)>,
    g_support: Option<(SpatialPoint, f64)>,
    f_groups: Vec<SupportGroup>,
    g_groups: Vec<SupportGroup>,
}

impl CauchyProblem {
    /// Data `(f, g)` for `(A, ∂_τA)` posed on the slice `τ = tau0 ≥ 0`.
    pub fn new(curvature: Curvature, f: VectorField, g: VectorField, tau0: f64) -> Result<Self> {
        ensure_chart(curvature, f.chart())?;
        ensure_chart(curvature, g.chart())?;
        if !(tau0 >= 0.0) || !tau0.is_finite() {
            return Err(Error::invalid("tau0", format!("must be finite and >= 0, got {tau0}")));
        }
        let support = |field: &VectorField| -> Result<Option<(SpatialPoint, f64)>> {
            if field.is_zero() {
                return Ok(None);
            }
            field
                .geodesic_support()
                .map(Some)
                .ok_or_else(|| Error::invalid("data", "support ball reaches the boundary plane"))
        };
        Ok(CauchyProblem {
            curvature,
            f_support: support(&f)?,
            g_support: support(&g)?,
            f_groups: f.support_groups()?,
            g_groups: g.support_groups()?,
            f,
            g,
            tau0,
        })
    }

    /// Data posed on the singular slice `τ = 0`.
    pub fn singular(curvature: Curvature, f: VectorField, g: VectorField) -> Result<Self> {
        Self::new(curvature, f, g, 0.0)
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn f(&self) -> &VectorField {
        &self.f
    }

    pub fn g(&self) -> &VectorField {
        &self.g
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn is_singular(&self) -> bool {
        self.tau0 == 0.0
    }

    /// Geodesic ball containing the supports of both `f` and `g`, anchored at
    /// the centre of the first non-zero one.
    pub fn support(&self) -> Option<(SpatialPoint, f64)> {
        match (self.f_support, self.g_support) {
            (None, None) => None,
            (Some(s), None) | (None, Some(s)) => Some(s),
            (Some((c, rf)), Some((cg, rg))) => {
                let d = geometry::distance(self.curvature, &c.coords(), &cg.coords());
                Some((c, rf.max(d + rg)))
            }
        }
    }

    /// The problem with `f, g` replaced by `α f, α g`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.curvature, self.f.scaled(factor), self.g.scaled(factor), self.tau0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub tau: f64,
    pub x: SpatialPoint,
}

impl SpacetimePoint {
    pub fn new(tau: f64, x: SpatialPoint) -> Self {
        SpacetimePoint { tau, x }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSample {
    pub point: SpacetimePoint,
    pub a: [f64; 3],
    pub a_tau: [f64; 3],
    pub quadrature_order: usize,
}

/// `M`, `M'` and `M''` of one field at one radius.
#[derive(Clone, Copy, Debug, Default)]
struct Means {
    m: Vec3,
    dm: Vec3,
    ddm: Vec3,
}

/// Means over `S_r(x)` of `f`, and of its first and second derivatives
/// along the unit-speed radial geodesics, up to `derivatives`. Over the
/// directions at `x` these are the `r`-derivatives of `M`.
fn group_means(group: &SupportGroup, x: &SpatialPoint, r: f64, order: usize, derivatives: usize) -> Result<Means> {
    if r == 0.0 {
        return Ok(Means { m: group.value(&x.coords()), ..Means::default() });
    }
    let chart = x.chart();
    let radius = r.abs();
    let rule = SphereQuadrature::restricted_to_ball(x, radius, &group.center, group.radius, order)?;
    let mut sums = [Vec3::zeros(); 3];
    for ((p, w), v) in rule.nodes().iter().zip(rule.weights()).zip(rule.velocities()) {
        let y = p.coords();
        let acc = if derivatives > 1 { geometry::geodesic_acceleration(chart, &y, v) } else { Vec3::zeros() };
        let vals = group.along(&y, v, &acc, derivatives);
        for (s, val) in sums.iter_mut().zip(vals) {
            *s += val * *w;
        }
    }
    let area = chart.sphere_area(radius);
    // M is even in r, M' odd, M'' even.
    Ok(Means { m: sums[0] / area, dm: sums[1] * (r.signum() / area), ddm: sums[2] / area })
}

/// Sum over support balls, one lens each, which keeps the result additive
/// in the data.
fn field_means(groups: &[SupportGroup], x: &SpatialPoint, r: f64, order: usize, derivatives: usize) -> Result<Means> {
    let mut total = Means::default();
    for group in groups {
        let part = group_means(group, x, r, order, derivatives)?;
        total.m += part.m;
        total.dm += part.dm;
        total.ddm += part.ddm;
    }
    Ok(total)
}

/// Spherical mean of `field` over the geodesic sphere `S_r(center)`.
///
/// Uses the support-restricted rule, so it stays accurate for spheres much
/// larger than the data support.
pub fn spherical_mean(field: &VectorField, center: &SpatialPoint, r: f64, order: usize) -> Result<[f64; 3]> {
    ensure_chart(field.chart(), center.chart())?;
    if !(r > 0.0) {
        return Err(Error::invalid("r", format!("must be positive, got {r}")));
    }
    if order < geometry::MIN_ORDER {
        return Err(Error::invalid("order", format!("must be at least {}, got {order}", geometry::MIN_ORDER)));
    }
    Ok(field_means(&field.support_groups()?, center, r, order, 0)?.m.into())
}

/// Spherical mean of an arbitrary vector function over the full sphere.
pub fn spherical_mean_of<F>(center: &SpatialPoint, r: f64, order: usize, f: F) -> Result<[f64; 3]>
where
    F: Fn(&Vec3) -> Vec3,
{
    let rule = SphereQuadrature::build(center, r, order)?;
    let sum = rule.nodes().iter().zip(rule.weights()).fold(Vec3::zeros(), |acc, (p, w)| acc + f(&p.coords()) * *w);
    Ok((sum / center.chart().sphere_area(r)).into())
}

/// Core evaluation at signed radius `r = τ − τ₀`.
fn evaluate_at_radius(
    problem: &CauchyProblem,
    x: &SpatialPoint,
    r: f64,
    order: usize,
    with_time_derivative: bool,
) -> Result<(Vec3, Vec3)> {
    ensure_chart(problem.curvature, x.chart())?;
    if order < geometry::MIN_ORDER {
        return Err(Error::invalid("order", format!("must be at least {}, got {order}", geometry::MIN_ORDER)));
    }
    if r.abs() < NEAR_ZERO_RADIUS {
        let f = problem.f.value_at(&x.coords());
        let g = problem.g.value_at(&x.coords());
        return Ok((f + g * r, g));
    }
    let depth = usize::from(with_time_derivative);
    let mf = field_means(&problem.f_groups, x, r, order, 1 + depth)?;
    let mg = field_means(&problem.g_groups, x, r, order, depth)?;
    let k = problem.curvature;
    let (sn, cs) = (k.sn(r), k.cs(r));
    let a = mf.m * cs + mf.dm * sn + mg.m * sn;
    if !with_time_derivative {
        return Ok((a, Vec3::zeros()));
    }

    // r-derivative of A; the sinh terms pick up `sn` from `cs' = sn` (zero
    // in the flat case).
    let sn_prime_of_cs = match k {
        Curvature::Flat => 0.0,
        Curvature::Hyperbolic => sn,
    };
    let a_tau = mf.m * sn_prime_of_cs + mf.dm * (2.0 * cs) + mf.ddm * sn + mg.m * cs + mg.dm * sn;
    Ok((a, a_tau))
}

fn sample(problem: &CauchyProblem, point: &SpacetimePoint, order: usize, r: f64) -> Result<SolutionSample> {
    let (a, a_tau) = evaluate_at_radius(problem, &point.x, r, order, true)?;
    let sample = SolutionSample { point: *point, a: a.into(), a_tau: a_tau.into(), quadrature_order: order };
    if sample.a.iter().chain(&sample.a_tau).any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!("non-finite solution at τ = {}", point.tau)));
    }
    Ok(sample)
}

fn forward_radius(problem: &CauchyProblem, tau: f64) -> Result<f64> {
    if !(tau > problem.tau0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("must exceed tau0 = {}, got {tau}", problem.tau0)));
    }
    Ok(tau - problem.tau0)
}

pub fn solve_flat(problem: &CauchyProblem, tau: f64, x: &SpatialPoint, order: usize) -> Result<SolutionSample> {
    ensure_chart(Curvature::Flat, problem.curvature)?;
    solve(problem, &SpacetimePoint::new(tau, *x), order)
}

pub fn solve_hyperbolic(problem: &CauchyProblem, tau: f64, x: &SpatialPoint, order: usize) -> Result<SolutionSample> {
    ensure_chart(Curvature::Hyperbolic, problem.curvature)?;
    solve(problem, &SpacetimePoint::new(tau, *x), order)
}

/// `(A, ∂_τA)` at `τ > τ₀`.
pub fn solve(problem: &CauchyProblem, point: &SpacetimePoint, order: usize) -> Result<SolutionSample> {
    let r = forward_radius(problem, point.tau)?;
    sample(problem, point, order, r)
}

/// `(A, ∂_τA)` for data posed at `τ₀ = 0`, at any `τ ≠ 0`. Negative `τ` is
/// the reflected branch.
pub fn solve_from_singularity(
    problem: &CauchyProblem,
    tau: f64,
    x: &SpatialPoint,
    order: usize,
) -> Result<SolutionSample> {
    if !problem.is_singular() {
        return Err(Error::invalid("tau0", format!("must be 0 for the singular propagator, got {}", problem.tau0)));
    }
    if tau == 0.0 || !tau.is_finite() {
        return Err(Error::invalid("tau", "must be finite and non-zero; use limit_at_singularity at τ = 0"));
    }
    sample(problem, &SpacetimePoint::new(tau, *x), order, tau)
}

/// Dispatches to [`solve`] or, for singular problems, to
/// [`solve_from_singularity`] (so `τ < 0` is accepted there).
pub fn evaluate(problem: &CauchyProblem, point: &SpacetimePoint, order: usize) -> Result<SolutionSample> {
    if problem.is_singular() {
        solve_from_singularity(problem, point.tau, &point.x, order)
    } else {
        solve(problem, point, order)
    }
}

/// `A` alone, skipping the extra quadratures `∂_τA` needs.
pub fn potential(problem: &CauchyProblem, point: &SpacetimePoint, order: usize) -> Result<[f64; 3]> {
    let r = if problem.is_singular() && point.tau < 0.0 { point.tau } else { forward_radius(problem, point.tau)? };
    Ok(evaluate_at_radius(problem, &point.x, r, order, false)?.0.into())
}

pub fn solve_batch(
    problem: &CauchyProblem,
    points: &[SpacetimePoint],
    order: usize,
    exec: Execution,
) -> Result<Vec<SolutionSample>> {
    exec.map(points, |p| evaluate(problem, p, order)).into_iter().collect()
}

pub fn potential_batch(
    problem: &CauchyProblem,
    points: &[SpacetimePoint],
    order: usize,
    exec: Execution,
) -> Result<Vec<[f64; 3]>> {
    exec.map(points, |p| potential(problem, p, order)).into_iter().collect()
}

/// Analytic limit of `(A, ∂_τA)` at the singular slice: `(f(x), g(x))`.
pub fn limit_at_singularity(problem: &CauchyProblem, x: &SpatialPoint) -> Result<([f64; 3], [f64; 3])> {
    if !problem.is_singular() {
        return Err(Error::invalid("tau0", "limit_at_singularity needs data posed at τ₀ = 0"));
    }
    Ok((problem.f.eval(x)?, problem.g.eval(x)?))
}

/// Default number of `τ` levels for [`richardson_limit`].
pub const RICHARDSON_LEVELS: usize = 8;

/// Extrapolated limit of the propagator as `τ → 0⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RichardsonLimit {
    pub a: [f64; 3],
    pub a_tau: [f64; 3],
    /// max-norm distance of the extrapolated values from `(f(x), g(x))`.
    pub error_a: f64,
    pub error_a_tau: f64,
    pub levels: usize,
}

/// Richardson extrapolation of `A(τ_k, x)` and `∂_τA(τ_k, x)` along
/// `τ_k = 0.2 · 2^(−k)`, `k < levels`, eliminating one power of `τ` per
/// column, compared against [`limit_at_singularity`].
pub fn richardson_limit(
    problem: &CauchyProblem,
    x: &SpatialPoint,
    order: usize,
    levels: usize,
) -> Result<RichardsonLimit> {
    if levels < 2 {
        return Err(Error::invalid("levels", format!("need at least 2, got {levels}")));
    }
    let (f, g) = limit_at_singularity(problem, x)?;
    let samples = (0..levels)
        .map(|k| solve_from_singularity(problem, 0.2 * 0.5f64.powi(k as i32), x, order))
        .collect::<Result<Vec<_>>>()?;
    let extrapolate = |pick: &dyn Fn(&SolutionSample) -> [f64; 3]| -> Vec3 {
        let mut table: Vec<Vec3> = samples.iter().map(|s| Vec3::from(pick(s))).collect();
        for col in 1..levels {
            let factor = 2f64.powi(col as i32);
            for k in (col..levels).rev() {
                table[k] = (table[k] * factor - table[k - 1]) / (factor - 1.0);
            }
        }
        table[levels - 1]
    };
    let a = extrapolate(&|s| s.a);
    let a_tau = extrapolate(&|s| s.a_tau);
    Ok(RichardsonLimit {
        a: a.into(),
        a_tau: a_tau.into(),
        error_a: (a - Vec3::from(f)).amax(),
        error_a_tau: (a_tau - Vec3::from(g)).amax(),
        levels,
    })
}
