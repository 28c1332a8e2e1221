//! Numerical laboratory for the ground-state soliton of the focusing cubic
//! Schrödinger equation in three dimensions: profile construction, spectral
//! certification of the linearized matrix Hamiltonian, Riesz projections,
//! linear and nonlinear propagation, and the stable-manifold shooter.
//!
//! Grid, stencil, band-solver, ground-state and ODE code is generic over
//! [`Real`] (`f32`/`f64`); dense spectral work runs in `f64`.

// `!(x > 0.0)` guards reject NaN on purpose; index loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod error;
pub mod galilei;
pub mod ground;
pub mod linear;
pub mod modulation;
pub mod nls;
pub mod ops;
pub mod projections;
pub mod radial;
pub mod real;
pub mod shooting;
pub mod spectral;

pub use error::{LabError, Result};
pub use real::Real;

/// Double-precision grid.
pub type Grid = radial::RadialGrid<f64>;
/// Double-precision ground state.
pub type Ground = ground::GroundState<f64>;

/// Runs dense kernels single-threaded so results do not depend on the
/// machine's core count. Outer loops still use the rayon pool.
pub fn sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}
