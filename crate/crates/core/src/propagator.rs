//! Discrete solution semigroup and fundamental solution.
//!
//! One step of the semi-Lagrangian scheme on the periodic grid is
//!
//! ```text
//! u^{k+1}(i) = min_{j ∈ window(i)} [ u^k(j) + dt · L(x_j, u^k(j), (x_i − x_j)/dt) ]
//! ```
//!
//! with `L` evaluated at the departure node and departure value. Paths jump
//! between grid nodes once per step, so the semigroup law and the Markov
//! property of the fundamental solution hold exactly at the discrete level.
//! Pinned initial data uses the sentinel [`BIG`]; sentinel nodes are excluded
//! from the minimization rather than penalized.
//!
//! [`picard_solve`] realizes the fundamental solution the other way: iterate
//! a frozen-`u` dynamic program whose `u` slot is the previous space-time
//! iterate, starting from `h_0 ≡ u0`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{DomainError, PeriodicGrid, TimeGrid};
use crate::hamiltonian::{HamiltonianError, HamiltonianModel, ModelKind};
use crate::math;
use crate::par;

/// Sentinel for "not reached" in pinned initial data.
pub const BIG: f64 = 1e12;

/// Largest admissible `λ·dt`.
pub const MAX_LAMBDA_DT: f64 = 0.5;

const MIDPOINT_SWEEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum PropagatorError {
    Domain(DomainError),
    Hamiltonian(HamiltonianError),
    /// `λ·dt` above [`MAX_LAMBDA_DT`].
    Unstable { lambda: f64, dt: f64 },
    GridMismatch,
    /// Picard iteration stopped at `max_iter` with the last gap above `tol`.
    NonConvergence { trace: PicardTrace },
    /// Backtracking reached a sentinel entry.
    MalformedField { node: usize, time_index: usize },
    InvalidArgument(&'static str),
}

impl fmt::Display for PropagatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropagatorError::Domain(e) => e.fmt(f),
            PropagatorError::Hamiltonian(e) => e.fmt(f),
            PropagatorError::Unstable { lambda, dt } => write!(
                f,
                "stability constraint violated: lambda*dt = {} > {MAX_LAMBDA_DT}",
                lambda * dt
            ),
            PropagatorError::GridMismatch => write!(f, "fields live on different grids"),
            PropagatorError::NonConvergence { trace } => write!(
                f,
                "Picard iteration did not converge after {} iterations (last gap {:e})",
                trace.iterations,
                trace.gaps.last().copied().unwrap_or(f64::NAN)
            ),
            PropagatorError::MalformedField { node, time_index } => write!(
                f,
                "backtracking hit an unreached entry at node {node}, time index {time_index}"
            ),
            PropagatorError::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PropagatorError {}

impl From<DomainError> for PropagatorError {
    fn from(e: DomainError) -> Self {
        PropagatorError::Domain(e)
    }
}

impl From<HamiltonianError> for PropagatorError {
    fn from(e: HamiltonianError) -> Self {
        PropagatorError::Hamiltonian(e)
    }
}

/// How the `u` argument of `L` is chosen inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum URule {
    /// Departure value `u^k(j)`.
    #[default]
    Explicit,
    /// `½(u^k(j) + u^{k+1}(i))`, resolved by a few fixed-point sweeps.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheme {
    /// Search window in nodes; velocity cap is `radius · spacing / dt`.
    pub window_radius: usize,
    #[serde(default)]
    pub u_rule: URule,
}

impl Scheme {
    pub fn explicit(window_radius: usize) -> Self {
        Self { window_radius, u_rule: URule::Explicit }
    }

    pub fn velocity_cap(&self, grid: &PeriodicGrid, dt: f64) -> f64 {
        self.window_radius as f64 * grid.spacing() / dt
    }

    /// Smallest radius with `cap ≥ 4·(lipschitz + 1)`, clipped to `n/2`.
    pub fn for_lipschitz_bound(grid: &PeriodicGrid, dt: f64, lipschitz: f64) -> Self {
        let want = 4.0 * (lipschitz + 1.0) * dt / grid.spacing();
        let r = (math::ceil(want) as usize).clamp(1, grid.len() / 2);
        Self::explicit(r)
    }
}

/// Values on the grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self, PropagatorError> {
        if values.len() != grid.len() {
            return Err(PropagatorError::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// `u0` at `x0`, [`BIG`] elsewhere.
    pub fn pinned(grid: PeriodicGrid, x0: usize, u0: f64) -> Self {
        let mut values = vec![BIG; grid.len()];
        values[x0 % grid.len()] = u0;
        Self { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `‖self − other‖∞`.
    pub fn distance(&self, other: &ValueField) -> f64 {
        sup_distance(&self.values, &other.values)
    }

    /// Every node below `BIG/2`.
    pub fn is_reached(&self) -> bool {
        self.values.iter().all(|v| is_live(*v))
    }
}

#[inline]
pub(crate) fn is_live(v: f64) -> bool {
    v < 0.5 * BIG
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max(math::abs(x - y)))
}

/// Diagnostics collected by a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    /// Nodes whose minimizer sits on the window edge while an interior
    /// candidate was available (velocity cap binding).
    pub binding_nodes: usize,
    /// Nodes with no admissible candidate.
    pub unreached_nodes: usize,
}

impl StepStats {
    fn absorb(&mut self, other: StepStats) {
        self.binding_nodes += other.binding_nodes;
        self.unreached_nodes += other.unreached_nodes;
    }
}

/// Result of a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub field: ValueField,
    pub argmin: Vec<u32>,
    pub stats: StepStats,
}

enum Increment {
    /// `value·factor + offset[j·m + k]`, plus `lag0` for frozen-u evaluation.
    Affine { factor: f64, coupling: f64, offset: Vec<f64>, lag0: Vec<f64> },
    General,
}

/// A model bound to a grid, time step and window: the precomputed pieces of
/// one semi-Lagrangian step.
pub struct Propagator<'m> {
    model: &'m HamiltonianModel,
    grid: PeriodicGrid,
    dt: f64,
    scheme: Scheme,
    /// Window offsets from the target node, in increasing order.
    offsets: Vec<isize>,
    /// Velocity of the link departure → target for each window slot.
    velocities: Vec<f64>,
    increment: Increment,
}

impl<'m> Propagator<'m> {
    pub fn new(
        model: &'m HamiltonianModel,
        grid: PeriodicGrid,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self, PropagatorError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(PropagatorError::InvalidArgument("dt must be positive"));
        }
        let lambda = model.lipschitz_constant();
        if lambda * dt > MAX_LAMBDA_DT {
            return Err(PropagatorError::Unstable { lambda, dt });
        }
        let offsets = grid.window_offsets(scheme.window_radius)?;
        let velocities: Vec<f64> = offsets
            .iter()
            .map(|&o| grid.node_displacement(grid.shift(0, o), 0) / dt)
            .collect();
        let m = offsets.len();
        let n = grid.len();
        let increment = if model.affine_increment(0.0, 0.0, dt).is_some() {
            let mut offset = Vec::with_capacity(n * m);
            let mut lag0 = Vec::with_capacity(n * m);
            let mut factor = 1.0;
            for j in 0..n {
                let x = grid.node(j);
                for &v in &velocities {
                    let (f, o) = model.affine_increment(x, v, dt).unwrap_or((1.0, 0.0));
                    factor = f;
                    offset.push(o);
                    lag0.push(model.lagrangian(x, 0.0, v)?);
                }
            }
            let coupling = match model.kind() {
                ModelKind::Quadratic { coupling, .. } => *coupling,
                ModelKind::Custom(_) => (1.0 - factor) / dt,
            };
            Increment::Affine { factor, coupling, offset, lag0 }
        } else {
            Increment::General
        };
        Ok(Self { model, grid, dt, scheme, offsets, velocities, increment })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn model(&self) -> &HamiltonianModel {
        self.model
    }

    /// Steps after which every node is reachable from any single node.
    pub fn reachability_steps(&self) -> usize {
        let r = self.scheme.window_radius;
        if r == 0 {
            usize::MAX
        } else {
            (self.grid.len() / 2).div_ceil(r)
        }
    }

    #[inline]
    fn explicit(&self, j: usize, k: usize, value: f64) -> Result<f64, HamiltonianError> {
        match &self.increment {
            Increment::Affine { factor, offset, .. } => {
                Ok(factor * value + offset[j * self.offsets.len() + k])
            }
            Increment::General => self.model.advance(self.grid.node(j), value, self.velocities[k], self.dt),
        }
    }

    #[inline]
    fn frozen(&self, j: usize, k: usize, value: f64, u_arg: f64) -> Result<f64, HamiltonianError> {
        match &self.increment {
            Increment::Affine { coupling, lag0, .. } => {
                Ok(value + self.dt * (lag0[j * self.offsets.len() + k] - coupling * u_arg))
            }
            Increment::General => {
                self.model
                    .advance_frozen(self.grid.node(j), value, u_arg, self.velocities[k], self.dt)
            }
        }
    }

    /// Minimizes `cost(j, k, prev[j])` over the window of `i`. Ties go to the
    /// smallest node index.
    fn minimize(
        &self,
        i: usize,
        prev: &[f64],
        cost: impl Fn(usize, usize, f64) -> Result<f64, HamiltonianError>,
    ) -> Result<(f64, u32, StepStats), HamiltonianError> {
        let m = self.offsets.len();
        let mut best = f64::INFINITY;
        let mut arg = usize::MAX;
        let mut slot = usize::MAX;
        let mut interior_live = false;
        for (k, &o) in self.offsets.iter().enumerate() {
            let j = self.grid.shift(i, o);
            let fj = prev[j];
            if !is_live(fj) {
                continue;
            }
            if k != 0 && k != m - 1 {
                interior_live = true;
            }
            let cand = cost(j, k, fj)?;
            if cand < best || (cand == best && j < arg) {
                best = cand;
                arg = j;
                slot = k;
            }
        }
        let mut stats = StepStats::default();
        if arg == usize::MAX {
            stats.unreached_nodes = 1;
            return Ok((BIG, i as u32, stats));
        }
        if m > 2 && (slot == 0 || slot == m - 1) && interior_live {
            stats.binding_nodes = 1;
        }
        Ok((best, arg as u32, stats))
    }

    fn step_node(&self, i: usize, prev: &[f64]) -> Result<(f64, u32, StepStats), HamiltonianError> {
        let explicit = self.minimize(i, prev, |j, k, fj| self.explicit(j, k, fj))?;
        match self.scheme.u_rule {
            URule::Explicit => Ok(explicit),
            URule::Midpoint => {
                if !is_live(explicit.0) {
                    return Ok(explicit);
                }
                let mut current = explicit;
                for _ in 0..MIDPOINT_SWEEPS {
                    let guess = current.0;
                    current = self.minimize(i, prev, |j, k, fj| self.frozen(j, k, fj, 0.5 * (fj + guess)))?;
                }
                Ok(current)
            }
        }
    }

    /// One step applied to raw slice values.
    pub fn step_values(&self, prev: &[f64]) -> Result<(Vec<f64>, Vec<u32>, StepStats), PropagatorError> {
        if prev.len() != self.grid.len() {
            return Err(PropagatorError::GridMismatch);
        }
        let results = par::map_indices(self.grid.len(), |i| self.step_node(i, prev));
        collect(results)
    }

    /// One step of the frozen-`u` dynamic program: the `u` slot of `L` reads
    /// `frozen` instead of the running value.
    fn frozen_step_values(
        &self,
        prev: &[f64],
        frozen: &[f64],
    ) -> Result<(Vec<f64>, Vec<u32>, StepStats), PropagatorError> {
        let results = par::map_indices(self.grid.len(), |i| {
            self.minimize(i, prev, |j, k, fj| self.frozen(j, k, fj, frozen[j]))
        });
        collect(results)
    }

    pub fn step(&self, field: &ValueField) -> Result<StepOutput, PropagatorError> {
        if field.grid != self.grid {
            return Err(PropagatorError::GridMismatch);
        }
        let (values, argmin, stats) = self.step_values(&field.values)?;
        Ok(StepOutput { field: ValueField { grid: self.grid, values }, argmin, stats })
    }

    /// Runs `steps` steps without storing intermediate slices; `visit` sees
    /// every slice including the initial one. Returns the final slice.
    pub fn run<F>(&self, phi: &ValueField, steps: usize, mut visit: F) -> Result<(ValueField, StepStats), PropagatorError>
    where
        F: FnMut(usize, &[f64]) -> core::ops::ControlFlow<()>,
    {
        if phi.grid != self.grid {
            return Err(PropagatorError::GridMismatch);
        }
        let mut current = phi.values.clone();
        let mut total = StepStats::default();
        if visit(0, &current).is_break() {
            return Ok((ValueField { grid: self.grid, values: current }, total));
        }
        for k in 1..=steps {
            let (next, _, stats) = self.step_values(&current)?;
            total.absorb(stats);
            current = next;
            if visit(k, &current).is_break() {
                break;
            }
        }
        Ok((ValueField { grid: self.grid, values: current }, total))
    }

    pub fn evolve(&self, phi: &ValueField, steps: usize) -> Result<SpaceTimeField, PropagatorError> {
        if phi.grid != self.grid {
            return Err(PropagatorError::GridMismatch);
        }
        let tgrid = TimeGrid::new(self.dt, steps)?;
        let n = self.grid.len();
        let mut values = Vec::with_capacity((steps + 1) * n);
        let mut argmin = Vec::with_capacity(steps * n);
        values.extend_from_slice(&phi.values);
        let mut stats = StepStats::default();
        for k in 0..steps {
            let (next, arg, s) = self.step_values(&values[k * n..(k + 1) * n])?;
            stats.absorb(s);
            values.extend_from_slice(&next);
            argmin.extend_from_slice(&arg);
        }
        let disconnected = if steps > self.reachability_steps() {
            let tail = &values[(steps) * n..];
            tail.iter().filter(|v| !is_live(**v)).count()
        } else {
            0
        };
        Ok(SpaceTimeField { grid: self.grid, tgrid, scheme: self.scheme, values, argmin, stats, disconnected_nodes: disconnected })
    }
}

fn collect(
    results: Vec<Result<(f64, u32, StepStats), HamiltonianError>>,
) -> Result<(Vec<f64>, Vec<u32>, StepStats), PropagatorError> {
    let mut values = Vec::with_capacity(results.len());
    let mut argmin = Vec::with_capacity(results.len());
    let mut stats = StepStats::default();
    for r in results {
        let (v, a, s) = r?;
        values.push(v);
        argmin.push(a);
        stats.absorb(s);
    }
    Ok((values, argmin, stats))
}

/// `h(x_i, t_k)` on the full space-time grid with argmin links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub grid: PeriodicGrid,
    pub tgrid: TimeGrid,
    pub scheme: Scheme,
    /// Row-major by time: entry `(i, k)` at `k·n + i`.
    pub values: Vec<f64>,
    /// Minimizing departure node of entry `(i, k)` at `(k−1)·n + i`, `k ≥ 1`.
    pub argmin: Vec<u32>,
    pub stats: StepStats,
    /// Unreached nodes in the final slice once every node should be reachable.
    pub disconnected_nodes: usize,
}

impl SpaceTimeField {
    pub fn steps(&self) -> usize {
        self.tgrid.steps()
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[k * self.grid.len() + i]
    }

    pub fn argmin(&self, i: usize, k: usize) -> usize {
        assert!(k >= 1, "no argmin layer at k = 0");
        self.argmin[(k - 1) * self.grid.len() + i] as usize
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn field_at(&self, k: usize) -> ValueField {
        ValueField { grid: self.grid, values: self.slice(k).to_vec() }
    }

    pub fn final_field(&self) -> ValueField {
        self.field_at(self.steps())
    }

    /// Largest `|stored − recomputed|` over all live entries with `k ≥ 1`,
    /// recomputing each slice from its predecessor with the explicit rule.
    pub fn bellman_residual(&self, model: &HamiltonianModel) -> Result<f64, PropagatorError> {
        let prop = Propagator::new(model, self.grid, self.tgrid.dt(), Scheme::explicit(self.scheme.window_radius))?;
        let mut worst = 0.0f64;
        for k in 0..self.steps() {
            let (next, _, _) = prop.step_values(self.slice(k))?;
            for (a, b) in next.iter().zip(self.slice(k + 1)) {
                if is_live(*a) || is_live(*b) {
                    worst = worst.max(math::abs(a - b));
                }
            }
        }
        Ok(worst)
    }
}

/// Discrete calibrated curve recovered from argmin links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerPath {
    /// Node per time index `0..=end`.
    pub nodes: Vec<usize>,
    /// Field value along the path per time index.
    pub values: Vec<f64>,
    /// Velocity of link `k → k+1`.
    pub velocities: Vec<f64>,
    pub dt: f64,
}

impl MinimizerPath {
    /// Lifted positions (continuous across wrap-around), starting at the
    /// first node's position.
    pub fn lifted_positions(&self, grid: &PeriodicGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut x = grid.node(self.nodes[0]);
        out.push(x);
        for v in &self.velocities {
            x += v * self.dt;
            out.push(x);
        }
        out
    }

    /// `max_k |values(k+1) − values(k) − dt·L(x_k, values(k), v_k)|`.
    pub fn calibration_defect(&self, model: &HamiltonianModel, grid: &PeriodicGrid) -> Result<f64, PropagatorError> {
        let mut worst = 0.0f64;
        for k in 0..self.velocities.len() {
            let l = model.lagrangian(grid.node(self.nodes[k]), self.values[k], self.velocities[k])?;
            let defect = self.values[k + 1] - self.values[k] - self.dt * l;
            worst = worst.max(math::abs(defect));
        }
        Ok(worst)
    }
}

/// One step of the semigroup.
pub fn step(
    model: &HamiltonianModel,
    field: &ValueField,
    dt: f64,
    scheme: Scheme,
) -> Result<StepOutput, PropagatorError> {
    Propagator::new(model, field.grid, dt, scheme)?.step(field)
}

/// `T_{t_k} φ` for `k = 0..=tgrid.steps()`.
pub fn evolve(
    model: &HamiltonianModel,
    phi: &ValueField,
    tgrid: TimeGrid,
    scheme: Scheme,
) -> Result<SpaceTimeField, PropagatorError> {
    Propagator::new(model, phi.grid, tgrid.dt(), scheme)?.evolve(phi, tgrid.steps())
}

/// `h_{x0,u0}(·, t_k)`: evolution of data pinned to `u0` at node `x0`.
pub fn fundamental_solution(
    model: &HamiltonianModel,
    grid: PeriodicGrid,
    x0: usize,
    u0: f64,
    tgrid: TimeGrid,
    scheme: Scheme,
) -> Result<SpaceTimeField, PropagatorError> {
    if x0 >= grid.len() {
        return Err(PropagatorError::InvalidArgument("source node outside grid"));
    }
    evolve(model, &ValueField::pinned(grid, x0, u0), tgrid, scheme)
}

/// Follows argmin links from `(end_node, end_k)` back to time 0.
pub fn backtrack(field: &SpaceTimeField, end_node: usize, end_k: usize) -> Result<MinimizerPath, PropagatorError> {
    let n = field.grid.len();
    if end_node >= n || end_k > field.steps() {
        return Err(PropagatorError::InvalidArgument("backtrack endpoint outside field"));
    }
    let mut nodes = vec![0usize; end_k + 1];
    let mut node = end_node;
    for k in (0..=end_k).rev() {
        if !is_live(field.value(node, k)) {
            return Err(PropagatorError::MalformedField { node, time_index: k });
        }
        nodes[k] = node;
        if k > 0 {
            node = field.argmin(node, k);
        }
    }
    let values = nodes.iter().enumerate().map(|(k, &i)| field.value(i, k)).collect();
    let dt = field.tgrid.dt();
    let velocities = nodes
        .windows(2)
        .map(|w| field.grid.node_displacement(w[0], w[1]) / dt)
        .collect();
    Ok(MinimizerPath { nodes, values, velocities, dt })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardParams {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial iterate `h_0 ≡ u0 + initial_offset`.
    #[serde(default)]
    pub initial_offset: f64,
}

impl Default for PicardParams {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, initial_offset: 0.0 }
    }
}

/// Sup-norm gaps `g_n = ‖h_{n+1} − h_n‖∞` of the Picard iteration, taken over
/// entries live in both iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PicardTrace {
    /// Index after which the factorial envelope `C(λT)^n/n!` must decay.
    pub fn burn_in(lambda: f64, horizon: f64) -> usize {
        math::ceil(lambda * horizon * math::E) as usize
    }
}

fn picard_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| is_live(**x) && is_live(**y))
        .fold(0.0, |m, (x, y)| m.max(math::abs(x - y)))
}

/// Fundamental solution by Picard iteration on whole space-time fields.
pub fn picard_solve(
    model: &HamiltonianModel,
    grid: PeriodicGrid,
    x0: usize,
    u0: f64,
    tgrid: TimeGrid,
    scheme: Scheme,
    params: PicardParams,
) -> Result<(SpaceTimeField, PicardTrace), PropagatorError> {
    if !(params.tol > 0.0) {
        return Err(PropagatorError::InvalidArgument("Picard tolerance must be positive"));
    }
    if x0 >= grid.len() {
        return Err(PropagatorError::InvalidArgument("source node outside grid"));
    }
    let prop = Propagator::new(model, grid, tgrid.dt(), Scheme::explicit(scheme.window_radius))?;
    let n = grid.len();
    let steps = tgrid.steps();
    let pinned = ValueField::pinned(grid, x0, u0).values;

    let mut current = vec![u0 + params.initial_offset; (steps + 1) * n];
    let mut gaps = Vec::new();
    for _ in 0..params.max_iter {
        let mut next = Vec::with_capacity((steps + 1) * n);
        let mut arg = Vec::with_capacity(steps * n);
        next.extend_from_slice(&pinned);
        let mut stats = StepStats::default();
        for k in 0..steps {
            let (slice, a, s) = prop.frozen_step_values(&next[k * n..(k + 1) * n], &current[k * n..(k + 1) * n])?;
            stats.absorb(s);
            next.extend_from_slice(&slice);
            arg.extend_from_slice(&a);
        }
        let gap = picard_gap(&next, &current);
        gaps.push(gap);
        current = next;
        if gap <= params.tol {
            let iterations = gaps.len() - 1;
            let field = SpaceTimeField {
                grid,
                tgrid,
                scheme,
                values: current,
                argmin: arg,
                stats,
                disconnected_nodes: 0,
            };
            return Ok((field, PicardTrace { gaps, converged: true, iterations }));
        }
    }
    let iterations = gaps.len();
    Err(PropagatorError::NonConvergence { trace: PicardTrace { gaps, converged: false, iterations } })
}
