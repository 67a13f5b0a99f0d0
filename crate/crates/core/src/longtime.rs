//! Large-time behaviour of the semigroup and stationary (weak KAM) theory:
//! trailing-window liminf fields, fixed points of `T_t`, the barrier
//! `B(x, u; y) = h_{x,u}(y, ∞) − u`, the projected Aubry set
//! `{x : B(x, u(x); x) = 0}`, and the representation
//! `u(x) = min_{y ∈ A} h_{y,u(y)}(x, ∞)`.
//!
//! `h(·, ∞)` and `liminf_{t→∞}` are both realized as the pointwise minimum
//! over the trailing window `[T − W, T]`. Runs whose mean drifts faster than
//! `drift_tol` inside that window, or whose sup-norm exceeds `k_guard`, are
//! refused as divergent.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::domain::{PeriodicGrid, TimeGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::math;
use crate::par;
use crate::propagator::{is_live, Propagator, PropagatorError, Scheme, ValueField};

#[derive(Debug, Clone, PartialEq)]
pub enum LongtimeError {
    Propagator(PropagatorError),
    /// Unbounded behaviour: the shift is outside the critical set.
    Diverged { time: f64, sup: f64, drift: f64 },
    InvalidArgument(&'static str),
}

impl fmt::Display for LongtimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LongtimeError::Propagator(e) => e.fmt(f),
            LongtimeError::Diverged { time, sup, drift } => write!(
                f,
                "solution diverges (t = {time}, sup = {sup:e}, drift = {drift:e}); shift the Hamiltonian into the critical set"
            ),
            LongtimeError::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LongtimeError {}

impl From<PropagatorError> for LongtimeError {
    fn from(e: PropagatorError) -> Self {
        LongtimeError::Propagator(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LongtimeParams {
    pub horizon: f64,
    /// Width of the trailing liminf window.
    pub window: f64,
    pub dt: f64,
    pub window_radius: usize,
    pub drift_tol: f64,
    pub k_guard: f64,
    /// Stationary iteration stops once `‖u^{k+1} − u^k‖∞ ≤ stationary_tol·dt`.
    pub stationary_tol: f64,
    pub max_steps: usize,
    pub aubry_tol: f64,
}

impl Default for LongtimeParams {
    fn default() -> Self {
        Self {
            horizon: 50.0,
            window: 10.0,
            dt: 1e-2,
            window_radius: 8,
            drift_tol: 1e-3,
            k_guard: 1e6,
            stationary_tol: 1e-6,
            max_steps: 200_000,
            aubry_tol: 1e-2,
        }
    }
}

impl LongtimeParams {
    fn scheme(&self) -> Scheme {
        Scheme::explicit(self.window_radius)
    }

    fn validate(&self) -> Result<TimeGrid, LongtimeError> {
        if !(self.window > 0.0) || !(self.horizon >= 2.0 * self.window) {
            return Err(LongtimeError::InvalidArgument("need horizon >= 2 * window > 0"));
        }
        TimeGrid::with_horizon(self.horizon, self.dt).map_err(|e| LongtimeError::Propagator(e.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfResult {
    pub field: ValueField,
    /// `max − min` over the window, per node.
    pub oscillation: Vec<f64>,
}

fn trailing_min(
    prop: &Propagator<'_>,
    phi: &ValueField,
    tgrid: TimeGrid,
    params: &LongtimeParams,
) -> Result<LiminfResult, LongtimeError> {
    let n = phi.len();
    let start = math::round((params.horizon - params.window) / tgrid.dt()) as usize;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let (mut ts, mut means) = (Vec::new(), Vec::new());
    let mut failure = None;
    prop.run(phi, tgrid.steps(), |k, values| {
        let sup = values.iter().filter(|v| is_live(**v)).fold(0.0f64, |m, v| m.max(math::abs(*v)));
        if sup > params.k_guard || !sup.is_finite() {
            failure = Some(LongtimeError::Diverged { time: tgrid.time(k), sup, drift: f64::NAN });
            return ControlFlow::Break(());
        }
        if k >= start {
            for i in 0..n {
                lo[i] = lo[i].min(values[i]);
                hi[i] = hi[i].max(values[i]);
            }
            ts.push(tgrid.time(k));
            means.push(values.iter().sum::<f64>() / n as f64);
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if lo.iter().any(|v| !is_live(*v)) {
        return Err(LongtimeError::InvalidArgument("window starts before every node is reached"));
    }
    let drift = window_slope(&ts, &means);
    if math::abs(drift) > params.drift_tol {
        let sup = lo.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
        return Err(LongtimeError::Diverged { time: params.horizon, sup, drift });
    }
    let oscillation = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    Ok(LiminfResult { field: ValueField { grid: phi.grid, values: lo }, oscillation })
}

fn window_slope(ts: &[f64], ys: &[f64]) -> f64 {
    if ts.len() < 2 {
        return 0.0;
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        num += (t - tm) * (y - ym);
        den += (t - tm) * (t - tm);
    }
    num / den
}

/// Pointwise minimum of `T_t φ` over `t ∈ [T − W, T]`.
pub fn liminf_field(
    model: &HamiltonianModel,
    phi: &ValueField,
    params: &LongtimeParams,
) -> Result<LiminfResult, LongtimeError> {
    let tgrid = params.validate()?;
    let prop = Propagator::new(model, phi.grid, tgrid.dt(), params.scheme())?;
    trailing_min(&prop, phi, tgrid, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMode {
    /// Iterate the step map to its fixed point (strictly increasing in `u`).
    FixedPointIteration,
    /// Trailing-window liminf of `T_t φ`.
    LiminfWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    pub u_star: ValueField,
    /// `‖step(u_star) − u_star‖∞`.
    pub fixed_point_residual: f64,
    pub iterations: usize,
    pub mode: StationaryMode,
    pub converged: bool,
}

/// Discrete weak KAM solution: a fixed point of one semigroup step.
pub fn stationary_solve(
    model: &HamiltonianModel,
    phi_init: &ValueField,
    params: &LongtimeParams,
) -> Result<StationaryResult, LongtimeError> {
    if !(params.stationary_tol > 0.0) {
        return Err(LongtimeError::InvalidArgument("stationary tolerance must be positive"));
    }
    let prop = Propagator::new(model, phi_init.grid, params.dt, params.scheme())?;
    let target = params.stationary_tol * params.dt;
    if model.is_strictly_increasing_in_u() {
        let mut u = phi_init.values.clone();
        let mut iterations = 0;
        let mut converged = false;
        while iterations < params.max_steps {
            let (next, _, _) = prop.step_values(&u)?;
            let delta = crate::propagator::sup_distance(&next, &u);
            u = next;
            iterations += 1;
            if !delta.is_finite() || delta > params.k_guard {
                return Err(LongtimeError::Diverged { time: iterations as f64 * params.dt, sup: delta, drift: f64::NAN });
            }
            if delta <= target {
                converged = true;
                break;
            }
        }
        let (check, _, _) = prop.step_values(&u)?;
        let residual = crate::propagator::sup_distance(&check, &u);
        Ok(StationaryResult {
            u_star: ValueField { grid: phi_init.grid, values: u },
            fixed_point_residual: residual,
            iterations,
            mode: StationaryMode::FixedPointIteration,
            converged,
        })
    } else {
        let tgrid = params.validate()?;
        let lim = trailing_min(&prop, phi_init, tgrid, params)?;
        let (check, _, _) = prop.step_values(&lim.field.values)?;
        let residual = crate::propagator::sup_distance(&check, &lim.field.values);
        Ok(StationaryResult {
            u_star: lim.field,
            fixed_point_residual: residual,
            iterations: tgrid.steps(),
            mode: StationaryMode::LiminfWindow,
            converged: residual <= target,
        })
    }
}

/// `B(x, u; ·)`: trailing-window estimate of `h_{x,u}(·, ∞) − u`.
pub fn barrier(
    model: &HamiltonianModel,
    grid: PeriodicGrid,
    x_node: usize,
    u_value: f64,
    params: &LongtimeParams,
) -> Result<ValueField, LongtimeError> {
    if x_node >= grid.len() {
        return Err(LongtimeError::InvalidArgument("source node outside grid"));
    }
    let tgrid = params.validate()?;
    let prop = Propagator::new(model, grid, tgrid.dt(), params.scheme())?;
    let pinned = ValueField::pinned(grid, x_node, u_value);
    let mut lim = trailing_min(&prop, &pinned, tgrid, params)?.field;
    for v in &mut lim.values {
        *v -= u_value;
    }
    Ok(lim)
}

fn barriers_from(
    model: &HamiltonianModel,
    u_star: &ValueField,
    sources: &[usize],
    params: &LongtimeParams,
) -> Result<Vec<ValueField>, LongtimeError> {
    par::map_indices(sources.len(), |k| {
        let y = sources[k];
        barrier(model, u_star.grid, y, u_star.values[y], params)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AubryReport {
    /// `B(x, u*(x); x)` per node.
    pub barrier_diag: Vec<f64>,
    pub aubry_nodes: Vec<usize>,
    pub u_on_aubry: Vec<f64>,
    /// Tolerance that produced `aubry_nodes` (after any escalation).
    pub aubry_tol: f64,
    pub escalations: u32,
    /// Set when the set stayed empty after the last escalation.
    pub flagged: bool,
}

/// Projected Aubry set of a stationary solution: nodes where the barrier
/// diagonal vanishes within `aubry_tol`, doubling the tolerance up to 8×
/// when nothing qualifies.
pub fn aubry_set(
    model: &HamiltonianModel,
    u_star: &ValueField,
    params: &LongtimeParams,
) -> Result<AubryReport, LongtimeError> {
    Ok(aubry_from_fields(u_star, &all_barriers(model, u_star, params)?, params))
}

/// [`aubry_set`] followed by [`representation_check`], sharing the barrier
/// fields between the two. The deviation is `None` for a flagged (empty) set.
pub fn aubry_with_representation(
    model: &HamiltonianModel,
    u_star: &ValueField,
    params: &LongtimeParams,
) -> Result<(AubryReport, Option<f64>), LongtimeError> {
    let fields = all_barriers(model, u_star, params)?;
    let report = aubry_from_fields(u_star, &fields, params);
    if report.aubry_nodes.is_empty() {
        return Ok((report, None));
    }
    let rows: Vec<&ValueField> = report.aubry_nodes.iter().map(|&y| &fields[y]).collect();
    let deviation = represent(u_star, &report.aubry_nodes, &rows);
    Ok((report, Some(deviation)))
}

fn all_barriers(
    model: &HamiltonianModel,
    u_star: &ValueField,
    params: &LongtimeParams,
) -> Result<Vec<ValueField>, LongtimeError> {
    let all: Vec<usize> = (0..u_star.len()).collect();
    barriers_from(model, u_star, &all, params)
}

fn aubry_from_fields(u_star: &ValueField, fields: &[ValueField], params: &LongtimeParams) -> AubryReport {
    let barrier_diag: Vec<f64> = fields.iter().enumerate().map(|(x, b)| b.values[x]).collect();
    let mut tol = params.aubry_tol;
    let mut escalations = 0;
    loop {
        let aubry_nodes: Vec<usize> = barrier_diag
            .iter()
            .enumerate()
            .filter(|(_, b)| math::abs(**b) <= tol)
            .map(|(x, _)| x)
            .collect();
        let flagged = aubry_nodes.is_empty() && escalations == 3;
        if !aubry_nodes.is_empty() || flagged {
            let u_on_aubry = aubry_nodes.iter().map(|&x| u_star.values[x]).collect();
            return AubryReport { barrier_diag, aubry_nodes, u_on_aubry, aubry_tol: tol, escalations, flagged };
        }
        tol *= 2.0;
        escalations += 1;
    }
}

fn represent(u_star: &ValueField, sources: &[usize], fields: &[&ValueField]) -> f64 {
    let mut rep = vec![f64::INFINITY; u_star.len()];
    for (b, &y) in fields.iter().zip(sources) {
        for (r, v) in rep.iter_mut().zip(&b.values) {
            *r = r.min(v + u_star.values[y]);
        }
    }
    crate::propagator::sup_distance(&rep, &u_star.values)
}

/// `‖min_{y ∈ A} [B(y, u*(y); ·) + u*(y)] − u*‖∞`.
pub fn representation_check(
    model: &HamiltonianModel,
    u_star: &ValueField,
    aubry: &AubryReport,
    params: &LongtimeParams,
) -> Result<f64, LongtimeError> {
    if aubry.aubry_nodes.is_empty() {
        return Err(LongtimeError::InvalidArgument("empty Aubry set"));
    }
    let fields = barriers_from(model, u_star, &aubry.aubry_nodes, params)?;
    let rows: Vec<&ValueField> = fields.iter().collect();
    Ok(represent(u_star, &aubry.aubry_nodes, &rows))
}
