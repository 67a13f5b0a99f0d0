//! Reference values that do not go through the propagator's recursion:
//! exhaustive path enumeration, the scalar ODE for constant data, and the
//! Hopf-Lax formula for the free kinetic Hamiltonian.

use alloc::vec::Vec;
use core::fmt;

use crate::domain::{DomainError, PeriodicGrid};
use crate::hamiltonian::{HamiltonianError, HamiltonianModel};
use crate::math;

pub const MAX_COARSE_NODES: usize = 12;
pub const MAX_COARSE_STEPS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// Instance too large for exhaustive enumeration.
    BudgetExceeded { paths: u128 },
    Domain(DomainError),
    Hamiltonian(HamiltonianError),
    Unreachable,
    InvalidArgument(&'static str),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::BudgetExceeded { paths } => write!(
                f,
                "brute force refused: about {paths} paths (limits: {MAX_COARSE_NODES} nodes, {MAX_COARSE_STEPS} steps)"
            ),
            OracleError::Domain(e) => e.fmt(f),
            OracleError::Hamiltonian(e) => e.fmt(f),
            OracleError::Unreachable => write!(f, "target not reachable in the given number of steps"),
            OracleError::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OracleError {}

impl From<DomainError> for OracleError {
    fn from(e: DomainError) -> Self {
        OracleError::Domain(e)
    }
}

impl From<HamiltonianError> for OracleError {
    fn from(e: HamiltonianError) -> Self {
        OracleError::Hamiltonian(e)
    }
}

/// Minimum over every lattice path of `k_steps` jumps (each within
/// `window_radius` nodes) from `x0` to `target` of the explicit action
/// recursion `U ← U + dt·L(x, U, v)`, starting at `U = u0`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_value(
    model: &HamiltonianModel,
    grid: &PeriodicGrid,
    x0: usize,
    u0: f64,
    target: usize,
    k_steps: usize,
    dt: f64,
    window_radius: usize,
) -> Result<f64, OracleError> {
    let moves = grid.window_offsets(window_radius)?;
    if grid.len() > MAX_COARSE_NODES || k_steps > MAX_COARSE_STEPS {
        let paths = (moves.len() as u128).saturating_pow(k_steps as u32);
        return Err(OracleError::BudgetExceeded { paths });
    }
    if x0 >= grid.len() || target >= grid.len() {
        return Err(OracleError::InvalidArgument("node outside grid"));
    }
    let m = moves.len();
    let mut digits = alloc::vec![0usize; k_steps];
    let mut best: Option<f64> = None;
    // odometer over move sequences, lexicographic
    loop {
        let mut node = x0;
        let mut value = u0;
        for &d in &digits {
            let next = grid.shift(node, moves[d]);
            let v = grid.node_displacement(node, next) / dt;
            value = model.advance(grid.node(node), value, v, dt)?;
            node = next;
        }
        if node == target {
            best = Some(match best {
                Some(b) if b <= value => b,
                _ => value,
            });
        }
        let mut pos = k_steps;
        loop {
            if pos == 0 {
                return best.ok_or(OracleError::Unreachable);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Solution of `u' = −β·u − V + c` with `u(0) = a_init` (constant data, constant `V`).
pub fn constant_data_ode(beta: f64, potential: f64, a_init: f64, c: f64, t: f64) -> f64 {
    if beta == 0.0 {
        a_init + (c - potential) * t
    } else {
        let eq = (c - potential) / beta;
        (a_init - eq) * math::exp(-beta * t) + eq
    }
}

/// `min_y [φ(y) + d(y, x)²/(2·kinetic·t)] + c·t` over `n_fine` equally spaced
/// `y` on the circle of circumference `length`.
pub fn hopf_lax(
    kinetic: f64,
    c: f64,
    phi: impl Fn(f64) -> f64,
    length: f64,
    target: f64,
    t: f64,
    n_fine: usize,
) -> Result<f64, OracleError> {
    if !(t > 0.0) || n_fine == 0 || !(kinetic > 0.0) {
        return Err(OracleError::InvalidArgument("need t > 0, kinetic > 0, n_fine > 0"));
    }
    let grid = PeriodicGrid::new(n_fine, length)?;
    let best = (0..n_fine)
        .map(|i| {
            let y = grid.node(i);
            let d = grid.periodic_distance(y, target);
            phi(y) + d * d / (2.0 * kinetic * t)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best + c * t)
}

/// Hopf-Lax values at each node of `grid`.
pub fn hopf_lax_field(
    kinetic: f64,
    c: f64,
    phi: impl Fn(f64) -> f64 + Copy,
    grid: &PeriodicGrid,
    t: f64,
    n_fine: usize,
) -> Result<Vec<f64>, OracleError> {
    grid.nodes().map(|x| hopf_lax(kinetic, c, phi, grid.length(), x, t, n_fine)).collect()
}
