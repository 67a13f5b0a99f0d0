//! Periodic grid on the flat circle `R / (length·Z)` and the uniform time grid.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainError {
    /// Grid needs at least one node and a positive, finite length.
    InvalidGrid { n: usize, length: f64 },
    /// Search window wider than half the torus.
    InvalidWindow { radius: usize, n: usize },
    InvalidTimeGrid { dt: f64, steps: usize },
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainError::InvalidGrid { n, length } => {
                write!(f, "invalid periodic grid: n = {n}, length = {length}")
            }
            DomainError::InvalidWindow { radius, n } => {
                write!(f, "invalid window: radius {radius} exceeds n/2 for n = {n}")
            }
            DomainError::InvalidTimeGrid { dt, steps } => {
                write!(f, "invalid time grid: dt = {dt}, steps = {steps}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DomainError {}

/// Uniform periodic grid with `n` nodes at `i · spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize, length: f64) -> Result<Self, DomainError> {
        if n == 0 || !(length > 0.0) || !length.is_finite() {
            return Err(DomainError::InvalidGrid { n, length });
        }
        Ok(Self { n, length })
    }

    /// Grid on the unit circle.
    pub fn unit(n: usize) -> Result<Self, DomainError> {
        Self::new(n, 1.0)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i % self.n) as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Reduces a position into `[0, length)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let r = x - self.length * math::floor(x / self.length);
        if r >= self.length {
            0.0
        } else {
            r
        }
    }

    /// Signed displacement `d` with `b ≡ a + d` and `d ∈ (-length/2, length/2]`.
    pub fn periodic_displacement(&self, a: f64, b: f64) -> f64 {
        let half = 0.5 * self.length;
        let mut d = self.wrap(b) - self.wrap(a);
        if d > half {
            d -= self.length;
        } else if d <= -half {
            d += self.length;
        }
        d
    }

    pub fn periodic_distance(&self, a: f64, b: f64) -> f64 {
        math::abs(self.periodic_displacement(a, b))
    }

    /// Signed node offset from `from` to `to`, in `(-n/2, n/2]`.
    pub fn index_offset(&self, from: usize, to: usize) -> isize {
        let n = self.n as isize;
        let mut d = (to as isize - from as isize).rem_euclid(n);
        if 2 * d > n {
            d -= n;
        }
        d
    }

    /// Node reached from `i` after moving `offset` nodes.
    pub fn shift(&self, i: usize, offset: isize) -> usize {
        (i as isize + offset).rem_euclid(self.n as isize) as usize
    }

    /// Displacement between two nodes, computed from the index offset so it
    /// is exact up to a single multiplication.
    pub fn node_displacement(&self, from: usize, to: usize) -> f64 {
        self.index_offset(from, to) as f64 * self.spacing()
    }

    /// Offsets `o` with `|o| ≤ radius`, in increasing displacement order. When
    /// `2·radius == n` the antipodal node appears once, at `+radius`.
    pub fn window_offsets(&self, radius: usize) -> Result<Vec<isize>, DomainError> {
        if 2 * radius > self.n {
            return Err(DomainError::InvalidWindow { radius, n: self.n });
        }
        let r = radius as isize;
        let lo = if 2 * radius == self.n && radius > 0 { -r + 1 } else { -r };
        Ok((lo..=r).collect())
    }

    /// Nodes within `radius` index steps of `i`, ordered by displacement.
    pub fn neighborhood(&self, i: usize, radius: usize) -> Result<Vec<usize>, DomainError> {
        Ok(self
            .window_offsets(radius)?
            .into_iter()
            .map(|o| self.shift(i, o))
            .collect())
    }

    /// Nearest node to a position.
    pub fn nearest_node(&self, x: f64) -> usize {
        let k = math::round(self.wrap(x) / self.spacing()) as usize;
        k % self.n
    }
}

/// Uniform time grid `t_k = k · dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self, DomainError> {
        if !(dt > 0.0) || !dt.is_finite() || steps == 0 {
            return Err(DomainError::InvalidTimeGrid { dt, steps });
        }
        Ok(Self { dt, steps })
    }

    /// Grid with `round(horizon / dt)` steps of exactly `dt`. The realized
    /// horizon is `steps · dt`.
    pub fn with_horizon(horizon: f64, dt: f64) -> Result<Self, DomainError> {
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(DomainError::InvalidTimeGrid { dt, steps: 0 });
        }
        let steps = math::round(horizon / dt) as usize;
        Self::new(dt, steps.max(1))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Same step size, different number of steps.
    pub fn with_steps(&self, steps: usize) -> Result<Self, DomainError> {
        Self::new(self.dt, steps)
    }
}
