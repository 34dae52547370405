//! Spatial geometry for the two charts used by the propagators: Euclidean
//! space and the upper half-space model of hyperbolic space, where the
//! metric is `(dx² + dy² + dz²) / z²` on `z > 0`.
//!
//! Hyperbolic computations go through the isometry that carries a base point
//! `p` to `(0, 0, 1)` (horizontal translation followed by dilation by
//! `1 / p.z`) and the hyperboloid model there. Dilations are conformal, so a
//! Euclidean unit direction at `p` is also the direction of the matching
//! tangent vector at `(0, 0, 1)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use gauss_quad::GaussLegendre;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Smallest angular order accepted by the sphere quadratures.
pub const MIN_ORDER: usize = 4;
/// Polar Gauss-Legendre nodes used when callers do not ask for anything else.
/// The azimuthal trapezoid rule always uses twice as many nodes.
pub const DEFAULT_ORDER: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    /// K = 0, Euclidean slices.
    Flat,
    /// K = -1, upper half-space slices.
    Hyperbolic,
}

impl Curvature {
    /// Radial function of the sphere area: `r` or `sinh r`.
    pub fn sn(self, r: f64) -> f64 {
        match self {
            Curvature::Flat => r,
            Curvature::Hyperbolic => r.sinh(),
        }
    }

    /// Derivative of [`Curvature::sn`]: `1` or `cosh r`.
    pub fn cs(self, r: f64) -> f64 {
        match self {
            Curvature::Flat => 1.0,
            Curvature::Hyperbolic => r.cosh(),
        }
    }

    /// Area of a geodesic sphere of radius `r`.
    pub fn sphere_area(self, r: f64) -> f64 {
        let s = self.sn(r);
        4.0 * PI * s * s
    }

    /// `s²/2` (flat) or `cosh s − 1` (hyperbolic). Affine in the cosine of the
    /// polar angle seen from the centre of any sphere through the point, which
    /// makes it the natural integration variable for lens quadratures.
    fn lens_coordinate(self, s: f64) -> f64 {
        match self {
            Curvature::Flat => 0.5 * s * s,
            Curvature::Hyperbolic => {
                let h = (0.5 * s).sinh();
                2.0 * h * h
            }
        }
    }

    fn lens_radius(self, w: f64) -> f64 {
        let w = w.max(0.0);
        match self {
            Curvature::Flat => (2.0 * w).sqrt(),
            Curvature::Hyperbolic => 2.0 * (0.5 * w).sqrt().asinh(),
        }
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Curvature::Flat => "flat",
            Curvature::Hyperbolic => "hyperbolic",
        })
    }
}

impl FromStr for Curvature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" | "0" | "k0" => Ok(Curvature::Flat),
            "hyperbolic" | "-1" | "k-1" => Ok(Curvature::Hyperbolic),
            other => Err(Error::invalid("curvature", format!("expected `flat` or `hyperbolic`, got `{other}`"))),
        }
    }
}

/// A point of a spatial slice, tagged with its chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialPoint {
    coords: Vec3,
    chart: Curvature,
}

impl SpatialPoint {
    pub fn new(chart: Curvature, coords: Vec3) -> Result<Self> {
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinates {coords:?}")));
        }
        if chart == Curvature::Hyperbolic && coords.z <= 0.0 {
            return Err(Error::Domain(format!("hyperbolic points need z > 0, got z = {}", coords.z)));
        }
        Ok(SpatialPoint { coords, chart })
    }

    pub fn flat(x: f64, y: f64, z: f64) -> Self {
        SpatialPoint { coords: Vec3::new(x, y, z), chart: Curvature::Flat }
    }

    pub fn hyperbolic(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Curvature::Hyperbolic, Vec3::new(x, y, z))
    }

    pub(crate) fn raw(chart: Curvature, coords: Vec3) -> Self {
        SpatialPoint { coords, chart }
    }

    pub fn coords(&self) -> Vec3 {
        self.coords
    }

    pub fn chart(&self) -> Curvature {
        self.chart
    }

    pub fn x(&self) -> f64 {
        self.coords.x
    }

    pub fn y(&self) -> f64 {
        self.coords.y
    }

    pub fn z(&self) -> f64 {
        self.coords.z
    }
}

pub(crate) fn ensure_chart(expected: Curvature, found: Curvature) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ChartMismatch { expected, found })
    }
}

/// Geodesic distance between two points of the same chart.
pub fn geodesic_distance(p: &SpatialPoint, q: &SpatialPoint) -> Result<f64> {
    ensure_chart(p.chart, q.chart)?;
    Ok(distance(p.chart, &p.coords, &q.coords))
}

pub(crate) fn distance(chart: Curvature, a: &Vec3, b: &Vec3) -> f64 {
    let euclid = (a - b).norm();
    match chart {
        Curvature::Flat => euclid,
        // arccosh(1 + |a-b|²/(2 a_z b_z)) written through sinh(d/2).
        Curvature::Hyperbolic => 2.0 * (euclid / (2.0 * (a.z * b.z).sqrt())).asinh(),
    }
}

/// A Euclidean unit vector together with `1 - v_z` and `1 + v_z`, both kept
/// to full relative precision. The hyperbolic exponential map divides by
/// `cosh s - v_z sinh s`, which cancels catastrophically for nearly vertical
/// directions unless these are carried separately.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Direction {
    v: Vec3,
    one_minus_z: f64,
    one_plus_z: f64,
}

impl Direction {
    pub(crate) fn new(v: Vec3) -> Option<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let v = v / n;
        let h2 = v.x * v.x + v.y * v.y;
        let (one_minus_z, one_plus_z) =
            if v.z >= 0.0 { (h2 / (1.0 + v.z), 1.0 + v.z) } else { (1.0 - v.z, h2 / (1.0 - v.z)) };
        Some(Direction { v, one_minus_z, one_plus_z })
    }

    fn negated(&self) -> Self {
        Direction { v: -self.v, one_minus_z: self.one_plus_z, one_plus_z: self.one_minus_z }
    }
}

/// Point at geodesic distance `s` from `p` along `dir`, and the unit-speed
/// velocity of that geodesic there, in ambient coordinates.
pub(crate) fn exp_map(chart: Curvature, p: &Vec3, dir: &Direction, s: f64) -> (Vec3, Vec3) {
    match chart {
        Curvature::Flat => (p + dir.v * s, dir.v),
        Curvature::Hyperbolic => {
            // Geodesic from (0,0,1) with initial direction v, pushed through
            // the hyperboloid model: z = 1/(cosh s - v_z sinh s).
            let (es, ems) = (s.exp(), (-s).exp());
            let den = 0.5 * (es * dir.one_minus_z + ems * dir.one_plus_z);
            let dden = 0.5 * (es * dir.one_minus_z - ems * dir.one_plus_z);
            let (sh, ch) = (s.sinh(), s.cosh());
            let h = Vec3::new(dir.v.x, dir.v.y, 0.0);
            let q = h * (sh / den) + Vec3::new(0.0, 0.0, 1.0 / den);
            let dq = h * (ch / den - sh * dden / (den * den)) - Vec3::new(0.0, 0.0, dden / (den * den));
            let point = Vec3::new(p.x + p.z * q.x, p.y + p.z * q.y, p.z * q.z);
            (point, dq * p.z)
        }
    }
}

/// Euclidean unit direction at `from` of the geodesic heading to `to`.
pub(crate) fn log_direction(chart: Curvature, from: &Vec3, to: &Vec3) -> Option<Direction> {
    match chart {
        Curvature::Flat => Direction::new(to - from),
        Curvature::Hyperbolic => {
            let u = (to.x - from.x) / from.z;
            let v = (to.y - from.y) / from.z;
            let zp1 = (to.z + from.z) / from.z;
            let zm1 = (to.z - from.z) / from.z;
            Direction::new(Vec3::new(u, v, 0.5 * (u * u + v * v + zm1 * zp1)))
        }
    }
}

/// Factor turning a Euclidean unit vector at `p` into a unit-speed tangent
/// vector of the chart metric.
pub(crate) fn unit_speed_scale(chart: Curvature, p: &Vec3) -> f64 {
    match chart {
        Curvature::Flat => 1.0,
        Curvature::Hyperbolic => p.z,
    }
}

/// Ambient second derivative of a geodesic through `p` with ambient velocity
/// `v`: zero in the flat chart, `(2 v_z v − |v|² e_z) / z` in the half-space.
pub(crate) fn geodesic_acceleration(chart: Curvature, p: &Vec3, v: &Vec3) -> Vec3 {
    match chart {
        Curvature::Flat => Vec3::zeros(),
        Curvature::Hyperbolic => (v * (2.0 * v.z) - Vec3::z() * v.norm_squared()) / p.z,
    }
}

/// Euclidean sphere realizing the geodesic sphere `S_r(center)`: itself in the
/// flat chart, centre `(x₀, y₀, z₀ cosh r)` and radius `z₀ sinh r` in the
/// half-space chart.
pub fn euclidean_realization(center: &SpatialPoint, r: f64) -> (Vec3, f64) {
    match center.chart {
        Curvature::Flat => (center.coords, r),
        Curvature::Hyperbolic => {
            let c = center.coords;
            (Vec3::new(c.x, c.y, c.z * r.cosh()), c.z * r.sinh())
        }
    }
}

/// Geodesic ball whose Euclidean realization is the ball `|p - c| ≤ radius`.
/// In the half-space chart this needs `c.z > radius`.
pub fn geodesic_ball_of_euclidean(chart: Curvature, c: &Vec3, radius: f64) -> Result<(SpatialPoint, f64)> {
    match chart {
        Curvature::Flat => Ok((SpatialPoint::raw(chart, *c), radius)),
        Curvature::Hyperbolic => {
            if c.z <= radius {
                return Err(Error::invalid(
                    "radius",
                    format!("ball of radius {radius} about z = {} reaches the boundary plane", c.z),
                ));
            }
            let h = ((c.z - radius) * (c.z + radius)).sqrt();
            let center = SpatialPoint::raw(chart, Vec3::new(c.x, c.y, h));
            Ok((center, (radius / c.z).atanh()))
        }
    }
}

/// A scalar function on the ambient coordinates of a chart.
pub trait ScalarField {
    fn value(&self, p: &Vec3) -> f64;

    /// Ambient-coordinate gradient. Defaults to central differences.
    fn gradient(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6 * p.norm().max(1.0);
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let mut a = *p;
            let mut b = *p;
            a[i] += h;
            b[i] -= h;
            g[i] = (self.value(&a) - self.value(&b)) / (2.0 * h);
        }
        g
    }
}

impl<F: Fn(&Vec3) -> f64> ScalarField for F {
    fn value(&self, p: &Vec3) -> f64 {
        self(p)
    }
}

/// Derivative of `f` at `y` along the unit-speed geodesic from `y` toward `x`.
///
/// In the flat chart this is `((x - y)/|x - y|) · ∇f(y)`. In the half-space
/// chart the Euclidean direction of the connecting geodesic at `y` replaces
/// `(x - y)/|x - y|`, and the factor `y_z` turns it into a unit-speed vector.
pub fn radial_derivative<F: ScalarField + ?Sized>(f: &F, y: &SpatialPoint, x: &SpatialPoint) -> Result<f64> {
    ensure_chart(y.chart, x.chart)?;
    if y.coords == x.coords {
        return Err(Error::Domain("radial derivative at the sphere centre".into()));
    }
    let dir = log_direction(y.chart, &y.coords, &x.coords)
        .ok_or_else(|| Error::Domain("degenerate geodesic direction".into()))?;
    Ok(unit_speed_scale(y.chart, &y.coords) * dir.v.dot(&f.gradient(&y.coords)))
}

type LegendreRule = Arc<[(f64, f64)]>;

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
fn legendre(order: usize) -> LegendreRule {
    static CACHE: OnceLock<RwLock<HashMap<usize, LegendreRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.read().expect("legendre cache poisoned").get(&order) {
        return rule.clone();
    }
    let degree = NonZeroUsize::new(order).expect("order checked by caller");
    let rule: LegendreRule = GaussLegendre::new(degree).as_node_weight_pairs().into();
    cache.write().expect("legendre cache poisoned").entry(order).or_insert(rule).clone()
}

/// Orthonormal pair completing `axis` to a right-handed frame.
fn frame(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() <= axis.y.abs() && axis.x.abs() <= axis.z.abs() {
        Vec3::x()
    } else if axis.y.abs() <= axis.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = (helper - axis * axis.dot(&helper)).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// How much of the geodesic sphere a quadrature covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    Full,
    /// Only the part of the sphere inside a given geodesic ball; the rest of
    /// the sphere is known to contribute nothing.
    Lens,
    Empty,
}

/// Nodes and positive surface-measure weights on a geodesic sphere `S_r(x)`.
///
/// Polar angles use Gauss-Legendre in the cosine, azimuths the uniform
/// trapezoid rule with `2 · order` nodes. Each node also carries the
/// unit-speed outward radial velocity, so radial derivatives of data can be
/// taken from ambient gradients.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    center: SpatialPoint,
    radius: f64,
    order: usize,
    coverage: Coverage,
    nodes: Vec<SpatialPoint>,
    weights: Vec<f64>,
    velocities: Vec<Vec3>,
}

fn check_sphere_args(r: f64, order: usize) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid("radius", format!("must be positive and finite, got {r}")));
    }
    if order < MIN_ORDER {
        return Err(Error::invalid("order", format!("must be at least {MIN_ORDER}, got {order}")));
    }
    Ok(())
}

impl SphereQuadrature {
    /// Full-sphere product rule about `center`.
    pub fn build(center: &SpatialPoint, r: f64, order: usize) -> Result<Self> {
        check_sphere_args(r, order)?;
        Ok(Self::polar_cap(center, r, order, &Vec3::z(), -1.0, Coverage::Full))
    }

    /// Product rule over `S_r(center) ∩ B(ball_center, ball_radius)`.
    ///
    /// For data supported in the ball this integrates exactly what the full
    /// sphere would, but puts every node where the data lives. That keeps
    /// the rule accurate for spheres much larger than the support, where a
    /// full-sphere rule would step over it entirely.
    pub fn restricted_to_ball(
        center: &SpatialPoint,
        r: f64,
        ball_center: &SpatialPoint,
        ball_radius: f64,
        order: usize,
    ) -> Result<Self> {
        check_sphere_args(r, order)?;
        ensure_chart(center.chart, ball_center.chart)?;
        if !(ball_radius > 0.0) {
            return Err(Error::invalid("ball_radius", format!("must be positive, got {ball_radius}")));
        }
        let chart = center.chart;
        let d = distance(chart, &center.coords, &ball_center.coords);
        let rho = ball_radius;

        if d <= rho {
            // Centre inside the ball: all quantities stay of order rho.
            if r >= rho + d {
                return Ok(Self::empty(center, r, order));
            }
            let axis =
                log_direction(chart, &center.coords, &ball_center.coords).map(|dir| dir.v).unwrap_or_else(Vec3::z);
            if r + d <= rho {
                return Ok(Self::polar_cap(center, r, order, &axis, -1.0, Coverage::Full));
            }
            let u_min = match chart {
                Curvature::Flat => (r * r + d * d - rho * rho) / (2.0 * r * d),
                Curvature::Hyperbolic => (r.cosh() * d.cosh() - rho.cosh()) / (r.sinh() * d.sinh()),
            };
            return Ok(Self::polar_cap(center, r, order, &axis, u_min.clamp(-1.0, 1.0), Coverage::Lens));
        }

        if (d - r).abs() >= rho {
            return Ok(Self::empty(center, r, order));
        }
        Ok(Self::lens_from_ball(center, r, d, ball_center, rho, order))
    }

    fn empty(center: &SpatialPoint, r: f64, order: usize) -> Self {
        SphereQuadrature {
            center: *center,
            radius: r,
            order,
            coverage: Coverage::Empty,
            nodes: Vec::new(),
            weights: Vec::new(),
            velocities: Vec::new(),
        }
    }

    /// Rule on the cap `cos θ ≥ u_min` around `axis`, parametrized from the
    /// sphere centre.
    fn polar_cap(center: &SpatialPoint, r: f64, order: usize, axis: &Vec3, u_min: f64, coverage: Coverage) -> Self {
        let chart = center.chart;
        let rule = legendre(order);
        let n_phi = 2 * order;
        let (e1, e2) = frame(axis);
        let sn = chart.sn(r);
        let half = 0.5 * (1.0 - u_min);
        let dphi = 2.0 * PI / n_phi as f64;

        let mut q = Self::empty(center, r, order);
        q.coverage = coverage;
        q.nodes.reserve(order * n_phi);
        for &(x, w) in rule.iter() {
            // u = cos θ, with 1 - u carried separately for small caps.
            let one_minus_u = half * (1.0 - x);
            let u = 1.0 - one_minus_u;
            let sin_t = (one_minus_u * (1.0 + u)).max(0.0).sqrt();
            let weight = sn * sn * w * half * dphi;
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                let v = axis * u + (e1 * phi.cos() + e2 * phi.sin()) * sin_t;
                let dir = Direction::new(v).expect("unit vector");
                let (p, vel) = exp_map(chart, &center.coords, &dir, r);
                q.nodes.push(SpatialPoint::raw(chart, p));
                q.weights.push(weight);
                q.velocities.push(vel);
            }
        }
        q
    }

    /// Lens rule parametrized from the ball centre, for sphere centres outside
    /// the ball. Integrates in `w = lens_coordinate(s)`, `s` the distance to
    /// the ball centre, over `[|d - r|, rho]`; the surface element is
    /// `(sn r / sn d) dw dφ`.
    fn lens_from_ball(center: &SpatialPoint, r: f64, d: f64, ball: &SpatialPoint, rho: f64, order: usize) -> Self {
        let chart = center.chart;
        let rule = legendre(order);
        let n_phi = 2 * order;
        let axis = log_direction(chart, &ball.coords, &center.coords).expect("distinct points").v;
        let (e1, e2) = frame(&axis);
        let w_lo = chart.lens_coordinate((d - r).abs());
        let w_hi = chart.lens_coordinate(rho);
        let half = 0.5 * (w_hi - w_lo);
        let dphi = 2.0 * PI / n_phi as f64;
        let scale = chart.sn(r) / chart.sn(d) * half * dphi;

        let mut q = Self::empty(center, r, order);
        q.coverage = Coverage::Lens;
        q.nodes.reserve(order * n_phi);
        for &(x, w) in rule.iter() {
            let s = chart.lens_radius(w_lo + half * (1.0 + x));
            // 1 - cos α, α the angle at the ball centre between the axis and
            // the node, from the law of cosines in product form.
            let one_minus_cos = match chart {
                Curvature::Flat => (r - d + s) * (r + d - s) / (2.0 * d * s),
                Curvature::Hyperbolic => {
                    2.0 * (0.5 * (r + d - s)).sinh() * (0.5 * (r - d + s)).sinh() / (d.sinh() * s.sinh())
                }
            }
            .clamp(0.0, 2.0);
            let cos_a = 1.0 - one_minus_cos;
            let sin_a = (one_minus_cos * (2.0 - one_minus_cos)).sqrt();
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                let eta = axis * cos_a + (e1 * phi.cos() + e2 * phi.sin()) * sin_a;
                let dir = Direction::new(eta).expect("unit vector");
                let (p, _) = exp_map(chart, &ball.coords, &dir, s);
                let outward = log_direction(chart, &p, &center.coords).expect("node differs from centre").negated();
                q.nodes.push(SpatialPoint::raw(chart, p));
                q.weights.push(scale * w);
                q.velocities.push(outward.v * unit_speed_scale(chart, &p));
            }
        }
        q
    }

    pub fn center(&self) -> &SpatialPoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coverage(&self) -> Coverage {
        self.coverage
    }

    pub fn nodes(&self) -> &[SpatialPoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unit-speed outward radial velocity at each node, ambient coordinates.
    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ wᵢ f(yᵢ), summed in node order.
    pub fn integrate<F: Fn(&SpatialPoint) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hyp(x: f64, y: f64, z: f64) -> SpatialPoint {
        SpatialPoint::hyperbolic(x, y, z).unwrap()
    }

    #[test]
    fn flat_distance_is_euclidean() {
        let d = geodesic_distance(&SpatialPoint::flat(0.0, 0.0, 0.0), &SpatialPoint::flat(3.0, 4.0, 0.0)).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn vertical_hyperbolic_distance_is_log_ratio() {
        let d = geodesic_distance(&hyp(0.0, 0.0, 1.0), &hyp(0.0, 0.0, std::f64::consts::E)).unwrap();
        assert_relative_eq!(d, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn horizontal_hyperbolic_distance_matches_arc_length() {
        let p = hyp(0.0, 0.0, 1.0);
        let q = hyp(1.0, 0.0, 1.0);
        let d = geodesic_distance(&p, &q).unwrap();
        assert_relative_eq!(d, 1.5f64.acosh(), epsilon = 1e-15);
        assert_relative_eq!(d, 0.962_423_650_119_206_9, epsilon = 1e-15);

        // Independent route: the geodesic is the circle of radius √1.25 about
        // (0.5, 0, 0). With polar angle t about that centre the hyperbolic
        // arc length element is dt / sin t; integrate with composite Simpson.
        let (lo, hi) = (1f64.atan2(0.5), 1f64.atan2(-0.5));
        let n = 2000;
        let h = (hi - lo) / n as f64;
        let integrand = |t: f64| 1.0 / t.sin();
        let mut acc = integrand(lo) + integrand(hi);
        for i in 1..n {
            acc += integrand(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert_relative_eq!(acc * h / 3.0, d, epsilon = 1e-10);
    }

    #[test]
    fn chart_mismatch_and_boundary_points_are_rejected() {
        let err = geodesic_distance(&SpatialPoint::flat(0.0, 0.0, 1.0), &hyp(0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::ChartMismatch { .. }));
        assert!(matches!(SpatialPoint::hyperbolic(0.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(SpatialPoint::hyperbolic(0.0, 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_map_moves_unit_speed_along_geodesics() {
        let p = Vec3::new(0.3, -0.2, 0.7);
        for v in [Vec3::new(1.0, 2.0, -0.5), Vec3::z(), -Vec3::z(), Vec3::new(0.0, 1.0, 1e-9)] {
            let dir = Direction::new(v).unwrap();
            for s in [1e-3, 0.5, 3.0, 12.0] {
                let (q, vel) = exp_map(Curvature::Hyperbolic, &p, &dir, s);
                assert_relative_eq!(distance(Curvature::Hyperbolic, &p, &q), s, max_relative = 1e-12);
                assert_relative_eq!(vel.norm() / q.z, 1.0, epsilon = 1e-12);
                let back = log_direction(Curvature::Hyperbolic, &p, &q).unwrap();
                assert_relative_eq!(back.v, dir.v, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sphere_weights_sum_to_area() {
        let q = SphereQuadrature::build(&SpatialPoint::flat(0.1, 0.2, 0.3), 1.0, 16).unwrap();
        assert_relative_eq!(q.total_weight(), 4.0 * PI, epsilon = 1e-10);

        let q = SphereQuadrature::build(&hyp(0.0, 0.0, 1.0), 1.0, 32).unwrap();
        let area = 4.0 * PI * 1f64.sinh().powi(2);
        // 30-digit reference value.
        assert_relative_eq!(area, 17.355_387_381_771_437, max_relative = 1e-15);
        assert_relative_eq!(q.total_weight(), area, max_relative = 1e-12);
    }

    #[test]
    fn second_harmonic_integrates_to_zero() {
        let q = SphereQuadrature::build(&SpatialPoint::flat(0.0, 0.0, 0.0), 1.0, 16).unwrap();
        let y20 = |p: &SpatialPoint| 0.5 * (3.0 * p.z() * p.z() - 1.0);
        assert!(q.integrate(y20).abs() < 1e-10);
    }

    #[test]
    fn order_below_minimum_is_rejected() {
        let err = SphereQuadrature::build(&SpatialPoint::flat(0.0, 0.0, 0.0), 1.0, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument { name: "order", .. }));
    }

    #[test]
    fn hyperbolic_nodes_sit_on_the_euclidean_realization() {
        let c = hyp(0.4, -1.0, 2.0);
        let r = 1.7;
        let q = SphereQuadrature::build(&c, r, 24).unwrap();
        let (ec, er) = euclidean_realization(&c, r);
        for p in q.nodes() {
            assert_relative_eq!((p.coords() - ec).norm(), er, max_relative = 1e-12);
            assert_relative_eq!(geodesic_distance(p, &c).unwrap(), r, max_relative = 1e-10);
        }
    }

    #[test]
    fn radial_derivative_examples() {
        let x = SpatialPoint::flat(0.0, 0.0, 0.0);
        let y = SpatialPoint::flat(1.0, 0.0, 0.0);
        let fx = |p: &Vec3| p.x;
        assert_relative_eq!(radial_derivative(&fx, &y, &x).unwrap(), -1.0, epsilon = 1e-9);
        let c = |_: &Vec3| 2.5;
        assert_eq!(radial_derivative(&c, &y, &x).unwrap(), 0.0);
        assert!(matches!(radial_derivative(&fx, &x, &x), Err(Error::Domain(_))));

        let logz = |p: &Vec3| p.z.ln();
        let x = hyp(0.0, 0.0, 1.0);
        let y = hyp(0.0, 0.0, std::f64::consts::E);
        let d = radial_derivative(&logz, &y, &x).unwrap();
        assert_relative_eq!(d, -1.0, epsilon = 1e-8);

        // Finite differences of f along the geodesic itself.
        let dir = log_direction(Curvature::Hyperbolic, &y.coords(), &x.coords()).unwrap();
        let h = 1e-5;
        let (a, _) = exp_map(Curvature::Hyperbolic, &y.coords(), &dir, h);
        let (b, _) = exp_map(Curvature::Hyperbolic, &y.coords(), &dir.negated(), h);
        assert_relative_eq!((logz(&a) - logz(&b)) / (2.0 * h), d, epsilon = 1e-8);
    }

    #[test]
    fn euclidean_ball_conversion_round_trips() {
        let (c, rho) = geodesic_ball_of_euclidean(Curvature::Hyperbolic, &Vec3::new(0.0, 0.0, 1.0), 0.3).unwrap();
        let (ec, er) = euclidean_realization(&c, rho);
        assert_relative_eq!(ec, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(er, 0.3, epsilon = 1e-15);
        assert!(geodesic_ball_of_euclidean(Curvature::Hyperbolic, &Vec3::new(0.0, 0.0, 0.3), 0.3).is_err());
    }

    /// The lens rule must integrate anything supported in the ball exactly as
    /// a (much finer) full-sphere rule does.
    #[test]
    fn lens_rule_matches_full_sphere_for_supported_integrands() {
        for chart in [Curvature::Flat, Curvature::Hyperbolic] {
            let ball = SpatialPoint::raw(chart, Vec3::new(0.1, 0.0, 1.2));
            let rho = 0.5;
            let bump = |p: &SpatialPoint| {
                let d = distance(chart, &p.coords(), &ball.coords());
                if d < rho {
                    (-1.0 / (1.0 - (d / rho).powi(2))).exp() * (1.0 + p.x())
                } else {
                    0.0
                }
            };
            for (x, r) in [
                (Vec3::new(0.2, 0.1, 1.3), 0.2),
                (Vec3::new(0.2, 0.1, 1.3), 0.45),
                (Vec3::new(0.9, 0.0, 1.5), 0.7),
                (Vec3::new(-0.4, 0.3, 0.9), 0.9),
            ] {
                let center = SpatialPoint::raw(chart, x);
                let lens = SphereQuadrature::restricted_to_ball(&center, r, &ball, rho, 32).unwrap();
                let full = SphereQuadrature::build(&center, r, 512).unwrap();
                let (a, b) = (lens.integrate(bump), full.integrate(bump));
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "{chart} x={x:?} r={r}: lens {a} full {b}");
            }
        }
    }
}
