//! Numerical tools for evolutionary Hamilton-Jacobi equations whose Hamiltonian
//! depends on the unknown function,
//!
//! ```text
//! ∂t u + H(x, u, ∂x u) = 0,   x on the circle R/Z,
//! ```
//!
//! built around the implicitly defined fundamental solution `h_{x0,u0}(x,t)`
//! and the solution semigroup `T_t`. The crate is `no_std` (with `alloc`);
//! the `parallel` feature pulls in `std` and rayon for data-parallel steps.
//!
//! Modules:
//! - [`domain`]: periodic spatial grid and uniform time grid.
//! - [`hamiltonian`]: Hamiltonian models, Legendre transform, derivatives.
//! - [`propagator`]: semi-Lagrangian semigroup, fundamental solution, Picard iteration.
//! - [`characteristics`]: contact characteristic flow and shooting.
//! - [`critical`]: drift classification, critical value search, Mañé value.
//! - [`longtime`]: liminf fields, weak KAM fixed points, barrier and Aubry set.
//! - [`oracle`]: brute-force and closed-form reference values.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(a <= b)` checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;
mod par;

pub mod characteristics;
pub mod critical;
pub mod domain;
pub mod hamiltonian;
pub mod longtime;
pub mod oracle;
pub mod propagator;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use characteristics::{CharacteristicState, ShootParams, ShootResult, Trajectory};
pub use critical::{Classification, CriticalValueReport, DriftParams, DriftReport};
pub use domain::{PeriodicGrid, TimeGrid};
pub use hamiltonian::{HamiltonianModel, Potential};
pub use longtime::{AubryReport, LongtimeParams, StationaryMode, StationaryResult};
pub use propagator::{MinimizerPath, PicardTrace, Scheme, SpaceTimeField, URule, ValueField, BIG};
