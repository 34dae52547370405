//! Compactly supported vector-valued Cauchy data built from bump functions.
//!
//! A bump of radius `R` about `c` is `exp(−1/(1 − |x−c|²/R²))` inside the
//! Euclidean ball and exactly zero outside. Supports are Euclidean balls of
//! the chart's ambient coordinates; in the half-space chart the matching
//! geodesic ball is derived on demand.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ensure_chart, Curvature, ScalarField, SpatialPoint, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    C1,
    C2,
    CInfinity,
}

/// One bump profile times a constant amplitude vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpTerm {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: Vec3,
}

impl BumpTerm {
    #[inline]
    fn profile(&self, p: &Vec3) -> Option<(f64, f64, Vec3)> {
        let d = p - self.center;
        let q = d.norm_squared() / (self.radius * self.radius);
        if q >= 1.0 {
            return None;
        }
        let inv = 1.0 / (1.0 - q);
        Some(((-inv).exp(), inv, d))
    }

    pub(crate) fn value(&self, p: &Vec3) -> Vec3 {
        match self.profile(p) {
            Some((phi, _, _)) => self.amplitude * phi,
            None => Vec3::zeros(),
        }
    }

    /// Rows are the gradients of the three components.
    pub(crate) fn jacobian(&self, p: &Vec3) -> Matrix3<f64> {
        match self.profile(p) {
            Some((phi, inv, d)) => {
                let grad = d * (-2.0 * phi * inv * inv / (self.radius * self.radius));
                self.amplitude * grad.transpose()
            }
            None => Matrix3::zeros(),
        }
    }
}

/// Terms sharing one support ball, and that ball in geodesic form.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SupportGroup {
    pub terms: Vec<BumpTerm>,
    pub center: SpatialPoint,
    pub radius: f64,
}

impl SupportGroup {
    pub fn value(&self, p: &Vec3) -> Vec3 {
        self.terms.iter().fold(Vec3::zeros(), |acc, t| acc + t.value(p))
    }
}

/// Terms of a group evaluated together along a curve through `p` with
/// velocity `v` and acceleration `acc`: the value, the first and the second
/// derivative in the curve parameter.
impl SupportGroup {
    pub fn along(&self, p: &Vec3, v: &Vec3, acc: &Vec3, order: usize) -> [Vec3; 3] {
        let mut out = [Vec3::zeros(); 3];
        for t in &self.terms {
            let Some((phi, inv, d)) = t.profile(p) else {
                continue;
            };
            let r2 = t.radius * t.radius;
            out[0] += t.amplitude * phi;
            if order == 0 {
                continue;
            }
            // ∇φ = −2 φ inv² d / R².
            let g = -2.0 * phi * inv * inv / r2;
            out[1] += t.amplitude * (g * d.dot(v));
            if order == 1 {
                continue;
            }
            // Hess φ = g I + 4 φ (inv⁴ − 2 inv³) d dᵀ / R⁴.
            let dv = d.dot(v);
            let inv3 = inv * inv * inv;
            let hess_vv = g * v.norm_squared() + 4.0 * phi * (inv3 * inv - 2.0 * inv3) * dv * dv / (r2 * r2);
            out[2] += t.amplitude * (hess_vv + g * d.dot(acc));
        }
        out
    }
}

/// Three-component data field on one chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    chart: Curvature,
    terms: Vec<BumpTerm>,
    smoothness: Smoothness,
}

/// Builds `amplitude · bump(center, radius)`.
pub fn make_bump(center: &SpatialPoint, radius: f64, amplitude: [f64; 3]) -> Result<VectorField> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid("radius", format!("must be positive and finite, got {radius}")));
    }
    if amplitude.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("amplitude", "entries must be finite"));
    }
    if center.chart() == Curvature::Hyperbolic && center.z() - radius <= 0.0 {
        return Err(Error::invalid(
            "radius",
            format!("support ball of radius {radius} about z = {} touches the boundary plane z = 0", center.z()),
        ));
    }
    Ok(VectorField {
        chart: center.chart(),
        terms: vec![BumpTerm { center: center.coords(), radius, amplitude: Vec3::from(amplitude) }],
        smoothness: Smoothness::CInfinity,
    })
}

impl VectorField {
    pub fn zero(chart: Curvature) -> Self {
        VectorField { chart, terms: Vec::new(), smoothness: Smoothness::CInfinity }
    }

    pub fn chart(&self) -> Curvature {
        self.chart
    }

    pub fn terms(&self) -> &[BumpTerm] {
        &self.terms
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// True when every component vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == Vec3::zeros())
    }

    pub fn eval(&self, y: &SpatialPoint) -> Result<[f64; 3]> {
        ensure_chart(self.chart, y.chart())?;
        Ok(self.value_at(&y.coords()).into())
    }

    /// Values at ambient coordinates, chart already checked.
    #[inline]
    pub fn value_at(&self, p: &Vec3) -> Vec3 {
        self.terms.iter().fold(Vec3::zeros(), |acc, t| acc + t.value(p))
    }

    /// Ambient-coordinate Jacobian; row `μ` is the gradient of component `μ`.
    #[inline]
    pub fn jacobian_at(&self, p: &Vec3) -> Matrix3<f64> {
        self.terms.iter().fold(Matrix3::zeros(), |acc, t| acc + t.jacobian(p))
    }

    pub fn jacobian(&self, y: &SpatialPoint) -> Result<Matrix3<f64>> {
        ensure_chart(self.chart, y.chart())?;
        Ok(self.jacobian_at(&y.coords()))
    }

    /// Scalar view of component `mu` (0, 1 or 2).
    pub fn component(&self, mu: usize) -> Component<'_> {
        assert!(mu < 3, "component index {mu} out of range");
        Component { field: self, mu }
    }

    pub fn scaled(&self, factor: f64) -> VectorField {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.amplitude *= factor;
        }
        out
    }

    pub fn plus(&self, other: &VectorField) -> Result<VectorField> {
        ensure_chart(self.chart, other.chart)?;
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Ok(VectorField { chart: self.chart, terms, smoothness: self.smoothness.min_with(other.smoothness) })
    }

    /// Euclidean ball in ambient coordinates containing the support, or
    /// `None` for the zero field.
    pub fn support_ball(&self) -> Option<(Vec3, f64)> {
        let live: Vec<&BumpTerm> = self.terms.iter().filter(|t| t.amplitude != Vec3::zeros()).collect();
        let first = live.first()?;
        if live.iter().all(|t| t.center == first.center) {
            let r = live.iter().map(|t| t.radius).fold(0.0, f64::max);
            return Some((first.center, r));
        }
        let c = live.iter().map(|t| t.center).sum::<Vec3>() / live.len() as f64;
        let r = live.iter().map(|t| (t.center - c).norm() + t.radius).fold(0.0, f64::max);
        Some((c, r))
    }

    /// Live terms grouped by support ball, with the geodesic form of each
    /// ball. Fails if a ball reaches the boundary plane.
    pub(crate) fn support_groups(&self) -> Result<Vec<SupportGroup>> {
        let mut groups: Vec<SupportGroup> = Vec::new();
        for t in self.terms.iter().filter(|t| t.amplitude != Vec3::zeros()) {
            if let Some(g) = groups.iter_mut().find(|g| g.terms[0].center == t.center && g.terms[0].radius == t.radius)
            {
                g.terms.push(*t);
                continue;
            }
            let (center, radius) = geometry::geodesic_ball_of_euclidean(self.chart, &t.center, t.radius)?;
            groups.push(SupportGroup { terms: vec![*t], center, radius });
        }
        Ok(groups)
    }

    /// Geodesic ball containing the support: its centre and geodesic radius.
    pub fn geodesic_support(&self) -> Option<(SpatialPoint, f64)> {
        let live: Vec<&BumpTerm> = self.terms.iter().filter(|t| t.amplitude != Vec3::zeros()).collect();
        let balls: Vec<(SpatialPoint, f64)> = live
            .iter()
            .map(|t| geometry::geodesic_ball_of_euclidean(self.chart, &t.center, t.radius))
            .collect::<Result<_>>()
            .ok()?;
        let (c0, _) = *balls.first()?;
        let radius = balls
            .iter()
            .map(|(c, rho)| geometry::distance(self.chart, &c0.coords(), &c.coords()) + rho)
            .fold(0.0, f64::max);
        Some((c0, radius))
    }

    /// Largest `|∂ᵢfⁱ|` over a `(2m+1)³` grid on the support box. Only
    /// meaningful in the flat chart, where it reports how far the data is
    /// from the divergence-free constraint.
    pub fn max_divergence(&self, resolution: usize) -> f64 {
        let Some((c, r)) = self.support_ball() else {
            return 0.0;
        };
        support_grid(&c, r, resolution).map(|p| self.jacobian_at(&p).trace().abs()).fold(0.0, f64::max)
    }
}

impl Smoothness {
    fn min_with(self, other: Smoothness) -> Smoothness {
        use Smoothness::*;
        match (self, other) {
            (C1, _) | (_, C1) => C1,
            (C2, _) | (_, C2) => C2,
            _ => CInfinity,
        }
    }
}

/// One component of a [`VectorField`] as a scalar field with analytic gradient.
#[derive(Clone, Copy, Debug)]
pub struct Component<'a> {
    field: &'a VectorField,
    mu: usize,
}

impl ScalarField for Component<'_> {
    fn value(&self, p: &Vec3) -> f64 {
        self.field.value_at(p)[self.mu]
    }

    fn gradient(&self, p: &Vec3) -> Vec3 {
        self.field.jacobian_at(p).row(self.mu).transpose()
    }
}

/// Sampled sup-norms of Cauchy data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    /// sup of the Euclidean norm of (f, ∇f) stacked; gradients are taken
    /// with respect to arc length of the chart metric.
    pub c_f: f64,
    /// sup of |g|.
    pub c_g: f64,
    /// Grid points per half-axis used for the sampling.
    pub resolution: usize,
}

impl DataNorms {
    /// Combined data scale used to normalize verification thresholds.
    pub fn scale(&self) -> f64 {
        self.c_f.max(self.c_g)
    }
}

/// Points `c + r·(i, j, k)/m` for `|i|, |j|, |k| ≤ m`, restricted to the
/// closed ball. Doubling `m` yields a superset, so sampled suprema never
/// decrease under refinement by factors of two.
fn support_grid(c: &Vec3, r: f64, m: usize) -> impl Iterator<Item = Vec3> + '_ {
    let m = m.max(1) as i64;
    let step = r / m as f64;
    (-m..=m).flat_map(move |k| {
        (-m..=m).flat_map(move |j| {
            (-m..=m).filter_map(move |i| {
                let off = Vec3::new(i as f64, j as f64, k as f64);
                (off.norm_squared() <= (m * m) as f64).then(|| c + off * step)
            })
        })
    })
}

pub fn data_norms(f: &VectorField, g: &VectorField, resolution: usize) -> Result<DataNorms> {
    ensure_chart(f.chart, g.chart)?;
    let chart = f.chart;
    let c_f = f.terms.iter().map(|t| {
        support_grid(&t.center, t.radius, resolution)
            .map(|p| {
                let metric = geometry::unit_speed_scale(chart, &p);
                let v = f.value_at(&p);
                let j = f.jacobian_at(&p) * metric;
                (v.norm_squared() + j.norm_squared()).sqrt()
            })
            .fold(0.0, f64::max)
    });
    let c_g = g
        .terms
        .iter()
        .map(|t| support_grid(&t.center, t.radius, resolution).map(|p| g.value_at(&p).norm()).fold(0.0, f64::max));
    Ok(DataNorms { c_f: c_f.fold(0.0, f64::max), c_g: c_g.fold(0.0, f64::max), resolution })
}
