//! Leapfrog finite-difference reference solver for
//! `∂²_τu = L u + m u`, with `L` the flat Laplacian or the half-space
//! Laplace–Beltrami operator `z²Δu − z ∂_z u`, and `m` the mass shift.
//!
//! Grids are cubes of `n³` nodes, x-fastest (`i + n(j + n k)`), with
//! homogeneous Dirichlet values on the outer faces. A periodic variant exists
//! for dispersion tests on plane waves.

mod compare;

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::VectorField;
use crate::geometry::{Curvature, Vec3};

pub use compare::{
    compare_flat, identify_hyperbolic_pde, sector_probes, CompareConfig, IdentifyConfig, OracleComparison, PdeReport,
    PdeVerdict, TimeComparison,
};

/// Largest accepted CFL number relative to `dx / √3` (times `1 / z_max`).
pub const CFL_LIMIT: f64 = 0.5;
/// Largest grid edge accepted anywhere.
pub const MAX_POINTS_PER_AXIS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// 7-point Laplacian and central first differences.
    Second,
    /// 13-point fourth-order Laplacian; second order in the layer next to the
    /// boundary.
    Fourth,
}

impl Stencil {
    /// Factor on the stable time step relative to the second-order stencil.
    fn cfl_factor(self) -> f64 {
        match self {
            Stencil::Second => 1.0,
            Stencil::Fourth => (0.75f64).sqrt(),
        }
    }
}

impl std::str::FromStr for Stencil {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2" | "second" => Ok(Stencil::Second),
            "4" | "fourth" => Ok(Stencil::Fourth),
            other => Err(Error::invalid("stencil", format!("expected `second` or `fourth`, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub curvature: Curvature,
    /// Coordinates of node (0, 0, 0).
    pub lower: Vec3,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub mass_shift: f64,
    pub stencil: Stencil,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(
        curvature: Curvature,
        lower: Vec3,
        n: usize,
        dx: f64,
        dt: f64,
        mass_shift: f64,
        stencil: Stencil,
    ) -> Result<Self> {
        let spec = GridSpec { curvature, lower, n, dx, dt, mass_shift, stencil, boundary: Boundary::Dirichlet };
        spec.validate()?;
        Ok(spec)
    }

    pub fn periodic(mut self) -> Result<Self> {
        if self.curvature != Curvature::Flat {
            return Err(Error::invalid("boundary", "periodic boxes are only available in the flat chart"));
        }
        self.boundary = Boundary::Periodic;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 5 || self.n > MAX_POINTS_PER_AXIS {
            return Err(Error::invalid("n", format!("must lie in 5..={MAX_POINTS_PER_AXIS}, got {}", self.n)));
        }
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return Err(Error::invalid("dx", format!("must be positive, got {}", self.dx)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !self.mass_shift.is_finite() {
            return Err(Error::invalid("mass_shift", "must be finite"));
        }
        if self.curvature == Curvature::Hyperbolic && !(self.lower.z > 0.0) {
            return Err(Error::invalid("extent", format!("hyperbolic boxes need z_min > 0, got {}", self.lower.z)));
        }
        let limit = max_stable_dt(self.curvature, self.dx, self.z_max(), self.stencil);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::invalid("dt", format!("{} violates the CFL bound {limit}", self.dt)));
        }
        Ok(())
    }

    pub fn upper(&self) -> Vec3 {
        self.lower + Vec3::repeat(self.dx * (self.n - 1) as f64)
    }

    pub fn z_max(&self) -> f64 {
        self.upper().z
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.lower + Vec3::new(i as f64, j as f64, k as f64) * self.dx
    }

    /// Node closest to `p`, if `p` lies in the box.
    pub fn nearest_node(&self, p: &Vec3) -> Option<(usize, usize, usize)> {
        let rel = (p - self.lower) / self.dx;
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let v = rel[a].round();
            if !(v >= 0.0 && v <= (self.n - 1) as f64) {
                return None;
            }
            ijk[a] = v as usize;
        }
        Some((ijk[0], ijk[1], ijk[2]))
    }

    /// Same box with `dt` lowered so that `unit` is a whole number of steps.
    pub fn with_step_dividing(mut self, unit: f64) -> Result<Self> {
        if !(unit > 0.0) {
            return Err(Error::invalid("unit", format!("must be positive, got {unit}")));
        }
        let steps = (unit / self.dt * (1.0 - 1e-12)).ceil().max(1.0);
        self.dt = unit / steps;
        self.validate()?;
        Ok(self)
    }
}

/// CFL bound `0.5 · dx / (√3 · c_max)`, `c_max = 1` (flat) or `z_max`.
pub fn max_stable_dt(curvature: Curvature, dx: f64, z_max: f64, stencil: Stencil) -> f64 {
    let speed = match curvature {
        Curvature::Flat => 1.0,
        Curvature::Hyperbolic => z_max,
    };
    CFL_LIMIT * dx / (3f64.sqrt() * speed) * stencil.cfl_factor()
}

/// Two time levels of each of the three components.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    /// `u(τ − dt)` per component; overwritten in place by each step.
    prev: [Vec<f64>; 3],
    /// `u(τ)` per component.
    curr: [Vec<f64>; 3],
    /// Components whose data is identically zero are never stepped.
    active: [bool; 3],
    tau: f64,
    steps: usize,
}

impl GridState {
    pub fn zeros(spec: &GridSpec, tau: f64) -> Self {
        let zero = || vec![0.0; spec.len()];
        GridState { prev: [zero(), zero(), zero()], curr: [zero(), zero(), zero()], active: [false; 3], tau, steps: 0 }
    }

    /// Samples `(f, g)` at `τ₀` and takes the Taylor start step, leaving the
    /// state at `τ₀ + dt`.
    pub fn from_data(spec: &GridSpec, f: &VectorField, g: &VectorField, tau0: f64, exec: Execution) -> Result<Self> {
        if f.chart() != spec.curvature || g.chart() != spec.curvature {
            return Err(Error::ChartMismatch {
                expected: spec.curvature,
                found: if f.chart() != spec.curvature { f.chart() } else { g.chart() },
            });
        }
        let mut state = GridState::zeros(spec, tau0);
        let n = spec.n;
        let sample = |field: &VectorField| -> [Vec<f64>; 3] {
            let slabs = exec.map_range(n, |k| {
                let mut out = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
                for j in 0..n {
                    for i in 0..n {
                        if spec.boundary == Boundary::Dirichlet && is_face(i, j, k, n) {
                            continue;
                        }
                        let v = field.value_at(&spec.node(i, j, k));
                        for mu in 0..3 {
                            out[mu][i + n * j] = v[mu];
                        }
                    }
                }
                out
            });
            let mut comps =
                [Vec::with_capacity(spec.len()), Vec::with_capacity(spec.len()), Vec::with_capacity(spec.len())];
            for slab in slabs {
                for mu in 0..3 {
                    comps[mu].extend_from_slice(&slab[mu]);
                }
            }
            comps
        };
        let u0 = sample(f);
        let v0 = sample(g);
        for mu in 0..3 {
            state.active[mu] = u0[mu].iter().chain(&v0[mu]).any(|&v| v != 0.0);
        }
        let [u0x, u0y, u0z] = u0;
        let [v0x, v0y, v0z] = v0;
        state.prev = [u0x, u0y, u0z];
        let v = [v0x, v0y, v0z];
        let dt = spec.dt;
        for mu in 0..3 {
            if !state.active[mu] {
                continue;
            }
            let u = &state.prev[mu];
            let g = &v[mu];
            let mut next = vec![0.0; spec.len()];
            let dirichlet = spec.boundary == Boundary::Dirichlet;
            exec.for_each_chunk_mut(&mut next, n * n, |k, out| {
                let mut op = vec![0.0; n];
                for j in 0..n {
                    if dirichlet && (k == 0 || j == 0 || k == n - 1 || j == n - 1) {
                        continue;
                    }
                    operator_row(spec, u, j, k, &mut op);
                    let base = n * (j + n * k);
                    let lo = if dirichlet { 1 } else { 0 };
                    let hi = if dirichlet { n - 1 } else { n };
                    for i in lo..hi {
                        out[n * j + i] = u[base + i] + dt * g[base + i] + 0.5 * dt * dt * op[i];
                    }
                }
            });
            state.curr[mu] = next;
        }
        state.tau = tau0 + dt;
        state.steps = 1;
        Ok(state)
    }

    /// State with prescribed levels `u(τ − dt)` and `u(τ)`, for tests.
    pub fn from_levels(spec: &GridSpec, prev: [Vec<f64>; 3], curr: [Vec<f64>; 3], tau: f64) -> Result<Self> {
        for level in prev.iter().chain(&curr) {
            if level.len() != spec.len() {
                return Err(Error::invalid("levels", format!("expected {} values, got {}", spec.len(), level.len())));
            }
        }
        let active = [0, 1, 2].map(|mu| prev[mu].iter().chain(&curr[mu]).any(|&v| v != 0.0));
        Ok(GridState { prev, curr, active, tau, steps: 0 })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn component(&self, mu: usize) -> &[f64] {
        &self.curr[mu]
    }

    pub fn previous(&self, mu: usize) -> &[f64] {
        &self.prev[mu]
    }

    pub fn is_finite(&self) -> bool {
        self.curr.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Values of the three components at grid node `(i, j, k)`.
    pub fn at_node(&self, spec: &GridSpec, i: usize, j: usize, k: usize) -> Vec3 {
        let idx = spec.index(i, j, k);
        Vec3::new(self.curr[0][idx], self.curr[1][idx], self.curr[2][idx])
    }

    /// Trilinear interpolation of the current level; `None` outside the box.
    pub fn sample(&self, spec: &GridSpec, p: &Vec3) -> Option<Vec3> {
        let rel = (p - spec.lower) / spec.dx;
        let top = (spec.n - 1) as f64;
        if rel.iter().any(|&v| !(v >= 0.0 && v <= top)) {
            return None;
        }
        let base = rel.map(|v| (v.floor() as usize).min(spec.n - 2));
        let frac = Vec3::new(rel.x - base.x as f64, rel.y - base.y as f64, rel.z - base.z as f64);
        let mut out = Vec3::zeros();
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (if di == 1 { frac.x } else { 1.0 - frac.x })
                        * (if dj == 1 { frac.y } else { 1.0 - frac.y })
                        * (if dk == 1 { frac.z } else { 1.0 - frac.z });
                    out += self.at_node(spec, base.x + di, base.y + dj, base.z + dk) * w;
                }
            }
        }
        Some(out)
    }
}

#[inline]
fn is_face(i: usize, j: usize, k: usize, n: usize) -> bool {
    i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1
}

/// Offsets of the neighbours at distance 1 and 2 along one axis, as signed
/// index deltas, and whether the fourth-order stencil fits.
#[inline]
fn axis_offsets(pos: usize, n: usize, stride: usize, periodic: bool) -> ([isize; 4], bool) {
    let s = stride as isize;
    if periodic {
        let wrap = |d: isize| -> isize {
            let target = (pos as isize + d).rem_euclid(n as isize);
            (target - pos as isize) * s
        };
        ([wrap(-2), wrap(-1), wrap(1), wrap(2)], true)
    } else {
        let wide = pos >= 2 && pos + 2 < n;
        ([-2 * s, -s, s, 2 * s], wide)
    }
}

/// `(L + m) u` at an interior node (or any node of a periodic box).
#[inline]
fn apply_operator(spec: &GridSpec, u: &[f64], i: usize, j: usize, k: usize) -> f64 {
    let n = spec.n;
    let periodic = spec.boundary == Boundary::Periodic;
    let idx = spec.index(i, j, k) as isize;
    let at = |off: isize| u[(idx + off) as usize];
    let c = u[idx as usize];
    let inv_dx2 = 1.0 / (spec.dx * spec.dx);

    let (ox, wx) = axis_offsets(i, n, 1, periodic);
    let (oy, wy) = axis_offsets(j, n, n, periodic);
    let (oz, wz) = axis_offsets(k, n, n * n, periodic);
    let fourth = spec.stencil == Stencil::Fourth && wx && wy && wz;

    let second_diff = |o: &[isize; 4]| -> f64 {
        if fourth {
            (-at(o[0]) + 16.0 * at(o[1]) - 30.0 * c + 16.0 * at(o[2]) - at(o[3])) / 12.0
        } else {
            at(o[1]) - 2.0 * c + at(o[2])
        }
    };
    let lap = (second_diff(&ox) + second_diff(&oy) + second_diff(&oz)) * inv_dx2;

    let core = match spec.curvature {
        Curvature::Flat => lap,
        Curvature::Hyperbolic => {
            let z = spec.lower.z + k as f64 * spec.dx;
            let dz = if fourth {
                (at(oz[0]) - 8.0 * at(oz[1]) + 8.0 * at(oz[2]) - at(oz[3])) / (12.0 * spec.dx)
            } else {
                (at(oz[2]) - at(oz[1])) / (2.0 * spec.dx)
            };
            z * z * lap - z * dz
        }
    };
    core + spec.mass_shift * c
}

/// `(L + m) u` along the x-row `(·, j, k)`, written to `out[1..n-1]`. The
/// row must be interior in `j` and `k` unless the box is periodic.
fn operator_row(spec: &GridSpec, u: &[f64], j: usize, k: usize, out: &mut [f64]) {
    let n = spec.n;
    if spec.boundary == Boundary::Periodic {
        for (i, o) in out.iter_mut().enumerate() {
            *o = apply_operator(spec, u, i, j, k);
        }
        return;
    }
    let row = |jj: usize, kk: usize| &u[n * (jj + n * kk)..n * (jj + n * kk) + n];
    let (c, ym, yp, zm, zp) = (row(j, k), row(j - 1, k), row(j + 1, k), row(j, k - 1), row(j, k + 1));
    let inv_dx2 = 1.0 / (spec.dx * spec.dx);
    let (zz, zc) = match spec.curvature {
        Curvature::Flat => (1.0, 0.0),
        Curvature::Hyperbolic => {
            let z = spec.lower.z + k as f64 * spec.dx;
            (z * z, z)
        }
    };
    let m = spec.mass_shift;
    let second = |i: usize| -> f64 {
        let lap = (c[i - 1] + c[i + 1] + ym[i] + yp[i] + zm[i] + zp[i] - 6.0 * c[i]) * inv_dx2;
        let dz = (zp[i] - zm[i]) / (2.0 * spec.dx);
        zz * lap - zc * dz + m * c[i]
    };
    let wide = spec.stencil == Stencil::Fourth && j >= 2 && j + 2 < n && k >= 2 && k + 2 < n;
    if !wide {
        for i in 1..n - 1 {
            out[i] = second(i);
        }
        return;
    }
    let (ym2, yp2, zm2, zp2) = (row(j - 2, k), row(j + 2, k), row(j, k - 2), row(j, k + 2));
    out[1] = second(1);
    out[n - 2] = second(n - 2);
    let inv12 = 1.0 / 12.0;
    for i in 2..n - 2 {
        let d2 = |a2: f64, a1: f64, b1: f64, b2: f64| -a2 + 16.0 * a1 + 16.0 * b1 - b2;
        let lap = (d2(c[i - 2], c[i - 1], c[i + 1], c[i + 2])
            + d2(ym2[i], ym[i], yp[i], yp2[i])
            + d2(zm2[i], zm[i], zp[i], zp2[i])
            - 90.0 * c[i])
            * inv12
            * inv_dx2;
        let dz = (zm2[i] - 8.0 * zm[i] + 8.0 * zp[i] - zp2[i]) * inv12 / spec.dx;
        out[i] = zz * lap - zc * dz + m * c[i];
    }
}

/// One leapfrog step `u⁺ = 2u − u⁻ + dt² (L + m) u`, computed in place over
/// the `u⁻` buffer, one z-slab per task.
pub fn fd_step_with(state: &mut GridState, spec: &GridSpec, exec: Execution) {
    let n = spec.n;
    let dt2 = spec.dt * spec.dt;
    let dirichlet = spec.boundary == Boundary::Dirichlet;
    for mu in 0..3 {
        if !state.active[mu] {
            continue;
        }
        let curr = &state.curr[mu];
        exec.for_each_chunk_mut(&mut state.prev[mu], n * n, |k, out| {
            let mut op = vec![0.0; n];
            for j in 0..n {
                let row = &mut out[n * j..n * (j + 1)];
                if dirichlet && (k == 0 || j == 0 || k == n - 1 || j == n - 1) {
                    row.fill(0.0);
                    continue;
                }
                operator_row(spec, curr, j, k, &mut op);
                let base = n * (j + n * k);
                let c = &curr[base..base + n];
                for i in 0..n {
                    row[i] = 2.0 * c[i] - row[i] + dt2 * op[i];
                }
                if dirichlet {
                    row[0] = 0.0;
                    row[n - 1] = 0.0;
                }
            }
        });
        std::mem::swap(&mut state.prev[mu], &mut state.curr[mu]);
    }
    state.tau += spec.dt;
    state.steps += 1;
}

/// [`fd_step_with`] under the default execution policy.
pub fn fd_step(state: &mut GridState, spec: &GridSpec) {
    fd_step_with(state, spec, Execution::default());
}

/// Steps until `tau` is reached; `tau − state.tau` must be a whole number of
/// steps (see [`GridSpec::with_step_dividing`]).
pub fn advance_to(state: &mut GridState, spec: &GridSpec, tau: f64, exec: Execution) -> Result<()> {
    let remaining = (tau - state.tau) / spec.dt;
    let steps = remaining.round();
    if steps < 0.0 || (remaining - steps).abs() > 1e-6 {
        return Err(Error::invalid(
            "tau",
            format!("{tau} is not a whole number of steps of {} after {}", spec.dt, state.tau),
        ));
    }
    for _ in 0..steps as usize {
        fd_step_with(state, spec, exec);
    }
    if !state.is_finite() {
        return Err(Error::NumericalFailure(format!("grid state blew up before τ = {tau}")));
    }
    Ok(())
}

/// Leapfrog energy between the two stored levels,
/// `Σ [((u − u⁻)/dt)² − u·(L + m)u⁻] dx³`. For the flat operator with
/// `m = 0` this is positive and conserved by the scheme up to round-off.
pub fn discrete_energy(state: &GridState, spec: &GridSpec) -> f64 {
    let n = spec.n;
    let dx3 = spec.dx.powi(3);
    let dirichlet = spec.boundary == Boundary::Dirichlet;
    let mut total = 0.0;
    for mu in 0..3 {
        if !state.active[mu] {
            continue;
        }
        let (u, um) = (&state.curr[mu], &state.prev[mu]);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if dirichlet && is_face(i, j, k, n) {
                        continue;
                    }
                    let idx = spec.index(i, j, k);
                    let vel = (u[idx] - um[idx]) / spec.dt;
                    total += (vel * vel - u[idx] * apply_operator(spec, um, i, j, k)) * dx3;
                }
            }
        }
    }
    total
}

const DUMP_MAGIC: &[u8; 8] = b"FRWGRID1";

/// Writes the current level: magic, `n` (u64), `dx`, `dt`, `τ` (f64), the
/// component count (u64), then every component in turn as little-endian
/// f64, x-fastest.
pub fn write_dump<W: Write>(mut out: W, state: &GridState, spec: &GridSpec) -> io::Result<()> {
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&(spec.n as u64).to_le_bytes())?;
    for v in [spec.dx, spec.dt, state.tau] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&3u64.to_le_bytes())?;
    for comp in &state.curr {
        for v in comp {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dump {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub tau: f64,
    pub components: Vec<Vec<f64>>,
}

pub fn read_dump<R: Read>(mut input: R) -> io::Result<Dump> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a grid dump"));
    }
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> io::Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut input)?) as usize;
    let dx = f64::from_le_bytes(next(&mut input)?);
    let dt = f64::from_le_bytes(next(&mut input)?);
    let tau = f64::from_le_bytes(next(&mut input)?);
    let count = u64::from_le_bytes(next(&mut input)?) as usize;
    let len = n.checked_pow(3).ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "grid too large"))?;
    let mut components = Vec::with_capacity(count);
    for _ in 0..count {
        let mut comp = Vec::with_capacity(len);
        for _ in 0..len {
            comp.push(f64::from_le_bytes(next(&mut input)?));
        }
        components.push(comp);
    }
    Ok(Dump { n, dx, dt, tau, components })
}
