//! Spherical-means propagators for the source-free Maxwell equations on flat
//! and open FRW space-times, written in Coulomb gauge in conformal time, where
//! each spatial component of the potential obeys a scalar wave equation on a
//! static product metric.
//!
//! * [`geometry`]: the Euclidean and upper half-space charts, geodesic
//!   spheres and their quadratures.
//! * [`timeframe`]: conformal against cosmological time.
//! * [`fields`]: compactly supported bump data.
//! * [`propagator`]: the closed-form solution operators, including data posed
//!   at the singular slice `τ = 0`.
//! * [`oracle`]: an independent leapfrog finite-difference solver.
//! * [`analysis`]: decay fits, support maps and singular-limit reports.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too. Stencil loops
// read better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod fields;
pub mod geometry;
pub mod oracle;
pub mod propagator;
pub mod timeframe;

pub use error::{Error, Result};
pub use exec::Execution;
pub use fields::{data_norms, make_bump, DataNorms, VectorField};
pub use geometry::{geodesic_distance, radial_derivative, Curvature, SpatialPoint, SphereQuadrature, Vec3};
pub use propagator::{
    evaluate, limit_at_singularity, potential, solve, solve_batch, solve_flat, solve_from_singularity,
    solve_hyperbolic, spherical_mean, CauchyProblem, SolutionSample, SpacetimePoint,
};
pub use timeframe::{scale_factor, t_to_tau, tau_to_t, ConformalTime};
